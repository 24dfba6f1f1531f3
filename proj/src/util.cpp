#include "persona/util.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <numbers>
#include <stdexcept>

#include "persona/error.hpp"

namespace persona {

std::string_view errc_name(Errc code) noexcept {
  switch (code) {
    case Errc::EmptyParse: return "EmptyParse";
    case Errc::GenerationBudgetExceeded: return "GenerationBudgetExceeded";
    case Errc::PreconditionFailed: return "PreconditionFailed";
    case Errc::OddGroupSize: return "OddGroupSize";
    case Errc::CoTParseError: return "CoTParseError";
    case Errc::EmptyAfterStrip: return "EmptyAfterStrip";
    case Errc::TooFewCandidates: return "TooFewCandidates";
    case Errc::MalformedVerdict: return "MalformedVerdict";
    case Errc::TournamentIncomplete: return "TournamentIncomplete";
    case Errc::InsufficientShots: return "InsufficientShots";
    case Errc::MissingGold: return "MissingGold";
    case Errc::MissingPrefix: return "MissingPrefix";
    case Errc::LengthMismatch: return "LengthMismatch";
    case Errc::NoPairableValues: return "NoPairableValues";
    case Errc::FormatError: return "FormatError";
    case Errc::CorruptManifest: return "CorruptManifest";
    case Errc::MissingArtifact: return "MissingArtifact";
    case Errc::TransportError: return "TransportError";
    case Errc::RateLimited: return "RateLimited";
    case Errc::ScoringUnsupported: return "ScoringUnsupported";
    case Errc::DimensionMismatch: return "DimensionMismatch";
    case Errc::FixtureMiss: return "FixtureMiss";
    case Errc::ConfigError: return "ConfigError";
  }
  return "Unknown";
}

std::uint64_t fnv1a64(std::string_view data, std::uint64_t basis) noexcept {
  std::uint64_t h = basis;
  for (unsigned char c : data) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::uint64_t mix64(std::uint64_t x) noexcept {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::uint64_t hash_fields(std::initializer_list<std::string_view> fields, std::uint64_t seed) noexcept {
  std::uint64_t h = mix64(seed);
  for (auto f : fields) {
    h = fnv1a64(f, h);
    h = fnv1a64(std::string_view("\x1f", 1), h);
  }
  return mix64(h);
}

std::string sha256_hex(std::string_view data) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(data.data(), data.size(), digest, &len, EVP_sha256(), nullptr) != 1) {
    throw std::runtime_error("sha256 failed");
  }
  static constexpr char kHex[] = "0123456789abcdef";
  std::string out;
  out.reserve(len * 2);
  for (unsigned int i = 0; i < len; ++i) {
    out.push_back(kHex[digest[i] >> 4]);
    out.push_back(kHex[digest[i] & 0xf]);
  }
  return out;
}

std::string short_digest(std::initializer_list<std::string_view> fields, std::size_t n) {
  std::string joined;
  for (auto f : fields) {
    joined.append(f);
    joined.push_back('\x1f');
  }
  return sha256_hex(joined).substr(0, n);
}

std::uint64_t Rng::next() noexcept {
  state_ += 0x9e3779b97f4a7c15ULL;
  std::uint64_t z = state_;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

double Rng::uniform() noexcept { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

std::size_t Rng::below(std::size_t n) noexcept {
  // Lemire-style rejection keeps the draw unbiased.
  const std::uint64_t bound = n;
  const std::uint64_t threshold = (0 - bound) % bound;
  for (;;) {
    const std::uint64_t r = next();
    if (r >= threshold) return static_cast<std::size_t>(r % bound);
  }
}

double Rng::normal() noexcept {
  double u1 = uniform();
  while (u1 <= 0.0) u1 = uniform();
  const double u2 = uniform();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

std::uint64_t derive_seed(std::uint64_t seed, std::string_view label) noexcept {
  return hash_fields({label}, seed);
}

std::string trim(std::string_view s) {
  std::size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return std::string(s.substr(b, e - b));
}

std::string to_lower(std::string_view s) {
  std::string out(s);
  for (auto& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

std::vector<std::string> split_lines(std::string_view s) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (start <= s.size()) {
    auto nl = s.find('\n', start);
    if (nl == std::string_view::npos) nl = s.size();
    std::string_view line = s.substr(start, nl - start);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    out.emplace_back(line);
    start = nl + 1;
  }
  return out;
}

std::vector<std::string> split_ws(std::string_view s) {
  std::vector<std::string> out;
  std::size_t i = 0;
  while (i < s.size()) {
    while (i < s.size() && std::isspace(static_cast<unsigned char>(s[i]))) ++i;
    std::size_t j = i;
    while (j < s.size() && !std::isspace(static_cast<unsigned char>(s[j]))) ++j;
    if (j > i) out.emplace_back(s.substr(i, j - i));
    i = j;
  }
  return out;
}

std::size_t word_count(std::string_view s) { return split_ws(s).size(); }

std::string normalize_text(std::string_view s) { return join(split_ws(to_lower(s)), " "); }

bool icontains(std::string_view haystack, std::string_view needle) {
  if (needle.empty()) return true;
  return to_lower(haystack).find(to_lower(needle)) != std::string::npos;
}

std::string join(const std::vector<std::string>& parts, std::string_view sep) {
  std::string out;
  for (std::size_t i = 0; i < parts.size(); ++i) {
    if (i) out.append(sep);
    out.append(parts[i]);
  }
  return out;
}

std::string replace_all(std::string s, std::string_view from, std::string_view to) {
  if (from.empty()) return s;
  std::size_t pos = 0;
  while ((pos = s.find(from, pos)) != std::string::npos) {
    s.replace(pos, from.size(), to);
    pos += to.size();
  }
  return s;
}

}  // namespace persona
