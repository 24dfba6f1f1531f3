#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace persona {

struct Axis {
  std::string id;
  std::string name;
  std::vector<std::string> sub_categories;
};

struct Membership {
  std::string axis;
  std::string sub_category;
  std::string description;
};

struct Persona {
  std::string id;
  std::string name;
  std::vector<Membership> memberships;
  std::map<std::string, std::string> demographics;
  /// First membership axis in catalog axis order; filled by Catalog::resolve().
  std::string primary_axis;

  bool in_axis(const std::string& axis_id) const;
};

struct Catalog {
  std::string version;
  std::vector<Axis> axes;
  std::vector<Persona> personas;

  const Axis* find_axis(const std::string& id) const;
  const Persona* find_persona(const std::string& id) const;
  /// Personas holding a membership in the axis, in catalog order.
  std::vector<const Persona*> personas_of(const std::string& axis_id) const;
  /// Zero-based catalog position; used for tag prefixes.
  std::optional<std::size_t> persona_index(const std::string& id) const;
  /// Recompute primary_axis for every persona.
  void resolve();
  /// Restrict to the first `max_axes` axes and at most `max_per_axis` personas
  /// whose primary axis is each kept axis. Zero means unlimited.
  Catalog subset(std::size_t max_axes, std::size_t max_per_axis) const;
};

void to_json(nlohmann::json& j, const Axis& a);
void from_json(const nlohmann::json& j, Axis& a);
void to_json(nlohmann::json& j, const Persona& p);
void from_json(const nlohmann::json& j, Persona& p);
void to_json(nlohmann::json& j, const Catalog& c);
void from_json(const nlohmann::json& j, Catalog& c);

Catalog load_catalog(const std::string& path);
void save_catalog(const Catalog& c, const std::string& path);

/// 11 axes / 50 personas with the sub-categories from the published dataset.
Catalog reference_catalog();

struct PersonaLine {
  std::string sub_category;
  std::string name;
  std::string description;

  bool operator==(const PersonaLine&) const = default;
};

struct PersonaLineParse {
  std::vector<PersonaLine> lines;
  std::size_t skipped = 0;
};

/// Parse "- {sub-category}, {name}, {description}" lines from a persona-sampling
/// completion. Throws Errc::EmptyParse when nothing parses.
PersonaLineParse parse_persona_lines(const std::string& text, const Axis& axis);
std::string serialize_persona_lines(const std::vector<PersonaLine>& lines);

struct Violation {
  std::string kind;  // dangling_axis, dangling_sub_category, duplicate_persona, ...
  std::string subject;
  std::string detail;
};

struct ValidationReport {
  std::vector<Violation> violations;
  std::vector<std::string> warnings;

  bool valid() const { return violations.empty(); }
  bool has(const std::string& kind) const;
};

ValidationReport validate_catalog(const Catalog& c);

struct DemographicRow {
  std::string axis;
  std::string attribute;
  std::string majority_value;  // empty when no value exceeds 50%
  double majority_pct = 0.0;

  bool has_majority() const { return !majority_value.empty(); }
};

/// One row per (axis, attribute) observed among the axis' personas.
std::vector<DemographicRow> demographics_report(const Catalog& c);
std::string demographics_csv(const std::vector<DemographicRow>& rows);

}  // namespace persona
