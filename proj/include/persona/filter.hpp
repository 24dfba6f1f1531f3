#pragma once

#include <map>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "persona/sampler.hpp"
#include "persona/util.hpp"

namespace persona {

struct WindowSelection {
  std::vector<std::string> selected_ids;  // ascending reward
  std::vector<double> rewards;            // aligned with selected_ids
  double range = 0.0;
  std::size_t window_start = 0;
};

/// Among all contiguous windows of `w` reward-sorted candidates, the one with the
/// smallest max-min spread; ties go to the higher mean reward, then the lower
/// start. Candidates with equal reward are ordered by id.
WindowSelection reward_window(const std::vector<Candidate>& candidates, std::size_t w = 20);

using Vec = std::vector<double>;

struct KMeansOptions {
  int max_iter = 300;
  double tol = 1e-6;
  int restarts = 10;
};

struct KMeansResult {
  std::vector<std::size_t> assignment;
  std::vector<Vec> centroids;
  double inertia = 0.0;
  int iterations = 0;
};

double squared_distance(std::span<const double> a, std::span<const double> b);

/// k-means++ seeding.
std::vector<Vec> kmeans_plus_plus(const std::vector<Vec>& points, std::size_t k, Rng& rng);

/// Lloyd iterations from the given centroids until the largest centroid shift
/// drops below tol or max_iter is reached. Empty clusters take the point of the
/// largest cluster farthest from its centroid.
KMeansResult lloyd(const std::vector<Vec>& points, std::vector<Vec> centroids, const KMeansOptions& opts = {});

/// Best of `opts.restarts` seeded k-means++ runs by inertia.
KMeansResult kmeans(const std::vector<Vec>& points, std::size_t k, std::uint64_t seed, const KMeansOptions& opts = {});

enum class FarthestMode { Sum, Min };

FarthestMode parse_farthest_mode(const std::string& s);
std::string to_string(FarthestMode m);

struct DiversitySelection {
  std::vector<std::string> finalist_ids;  // one per cluster, in cluster order
  std::map<std::string, std::size_t> cluster_of;
  std::vector<Vec> centroids;
  /// Distance score of every candidate to the centroids of the other clusters.
  std::map<std::string, double> farthest_score;
};

/// Distance from `point` to every centroid except `own`, reduced by sum or min.
double farthest_score(std::span<const double> point, const std::vector<Vec>& centroids, std::size_t own, FarthestMode mode);

/// Cluster the candidates' embeddings into k groups and keep, per cluster, the
/// member scoring highest on farthest_score (ties: lowest id).
DiversitySelection diverse_select(const std::vector<Candidate>& candidates, std::size_t k, std::uint64_t seed,
                                  FarthestMode mode = FarthestMode::Sum, const KMeansOptions& opts = {});

}  // namespace persona
