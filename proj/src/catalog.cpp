#include "persona/catalog.hpp"

#include <algorithm>
#include <cctype>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <set>
#include <sstream>

#include "persona/error.hpp"
#include "persona/util.hpp"

namespace persona {

namespace {

std::string slugify(std::string_view name) {
  std::string out;
  bool dash = false;
  for (unsigned char c : name) {
    if (std::isalnum(c)) {
      out.push_back(static_cast<char>(std::tolower(c)));
      dash = false;
    } else if (c >= 0x80) {
      out.push_back(static_cast<char>(c));
      dash = false;
    } else if (!out.empty() && !dash) {
      out.push_back('_');
      dash = true;
    }
  }
  while (!out.empty() && out.back() == '_') out.pop_back();
  return out;
}

}  // namespace

bool Persona::in_axis(const std::string& axis_id) const {
  return std::any_of(memberships.begin(), memberships.end(),
                     [&](const Membership& m) { return m.axis == axis_id; });
}

const Axis* Catalog::find_axis(const std::string& id) const {
  auto it = std::find_if(axes.begin(), axes.end(), [&](const Axis& a) { return a.id == id; });
  return it == axes.end() ? nullptr : &*it;
}

const Persona* Catalog::find_persona(const std::string& id) const {
  auto it = std::find_if(personas.begin(), personas.end(), [&](const Persona& p) { return p.id == id; });
  return it == personas.end() ? nullptr : &*it;
}

std::vector<const Persona*> Catalog::personas_of(const std::string& axis_id) const {
  std::vector<const Persona*> out;
  for (const auto& p : personas) {
    if (p.in_axis(axis_id)) out.push_back(&p);
  }
  return out;
}

std::optional<std::size_t> Catalog::persona_index(const std::string& id) const {
  for (std::size_t i = 0; i < personas.size(); ++i) {
    if (personas[i].id == id) return i;
  }
  return std::nullopt;
}

void Catalog::resolve() {
  for (auto& p : personas) {
    p.primary_axis.clear();
    for (const auto& a : axes) {
      if (p.in_axis(a.id)) {
        p.primary_axis = a.id;
        break;
      }
    }
  }
}

Catalog Catalog::subset(std::size_t max_axes, std::size_t max_per_axis) const {
  Catalog out;
  out.version = version;
  const std::size_t n_axes = max_axes == 0 ? axes.size() : std::min(max_axes, axes.size());
  out.axes.assign(axes.begin(), axes.begin() + static_cast<std::ptrdiff_t>(n_axes));
  std::map<std::string, std::size_t> taken;
  for (const auto& p : personas) {
    if (!out.find_axis(p.primary_axis)) continue;
    auto& count = taken[p.primary_axis];
    if (max_per_axis != 0 && count >= max_per_axis) continue;
    ++count;
    Persona q = p;
    std::erase_if(q.memberships, [&](const Membership& m) { return !out.find_axis(m.axis); });
    out.personas.push_back(std::move(q));
  }
  out.resolve();
  return out;
}

void to_json(nlohmann::json& j, const Axis& a) {
  j = {{"id", a.id}, {"name", a.name}, {"sub_categories", a.sub_categories}};
}

void from_json(const nlohmann::json& j, Axis& a) {
  a.id = j.at("id").get<std::string>();
  a.name = j.value("name", a.id);
  a.sub_categories = j.at("sub_categories").get<std::vector<std::string>>();
}

void to_json(nlohmann::json& j, const Persona& p) {
  nlohmann::json members = nlohmann::json::array();
  for (const auto& m : p.memberships) {
    members.push_back({{"axis", m.axis}, {"sub_category", m.sub_category}, {"description", m.description}});
  }
  j = {{"id", p.id}, {"name", p.name}, {"memberships", members}, {"demographics", p.demographics}};
}

void from_json(const nlohmann::json& j, Persona& p) {
  p.id = j.at("id").get<std::string>();
  p.name = j.at("name").get<std::string>();
  p.memberships.clear();
  for (const auto& m : j.at("memberships")) {
    p.memberships.push_back({m.at("axis").get<std::string>(), m.at("sub_category").get<std::string>(),
                             m.value("description", std::string())});
  }
  p.demographics = j.value("demographics", std::map<std::string, std::string>{});
}

void to_json(nlohmann::json& j, const Catalog& c) {
  j = {{"version", c.version}, {"axes", c.axes}, {"personas", c.personas}};
}

void from_json(const nlohmann::json& j, Catalog& c) {
  c.version = j.value("version", std::string("0"));
  c.axes = j.at("axes").get<std::vector<Axis>>();
  c.personas = j.at("personas").get<std::vector<Persona>>();
  c.resolve();
}

Catalog load_catalog(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::MissingArtifact, "missing artifact: " + path);
  try {
    return nlohmann::json::parse(in).get<Catalog>();
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::FormatError, path + ": " + e.what());
  }
}

void save_catalog(const Catalog& c, const std::string& path) {
  const std::filesystem::path target(path);
  if (target.has_parent_path()) std::filesystem::create_directories(target.parent_path());
  std::ofstream out(path);
  out << nlohmann::json(c).dump(2) << '\n';
  if (!out) throw Error(Errc::MissingArtifact, "cannot write " + path);
}

Catalog reference_catalog() {
  struct Entry {
    const char* name;
    const char* sub_category;
  };
  struct AxisSpec {
    const char* name;
    std::vector<Entry> entries;
  };
  const std::vector<AxisSpec> spec = {
      {"sports",
       {{"LeBron James", "Basketball Player"},
        {"Serena Williams", "Tennis Player"},
        {"David Beckham", "Soccer Player"},
        {"Tiger Woods", "Golf Player"},
        {"Mike Trout", "Baseball Player"}}},
      {"diet",
       {{"Ellen DeGeneres", "Veganism"},
        {"Gwyneth Paltrow", "Gluten-Free"},
        {"Megan Fox", "Paleo"},
        {"Jennifer Aniston", "Mediterranean"},
        {"Halle Berry", "Ketogenic"}}},
      {"politics",
       {{"Bernie Sanders", "Liberal"},
        {"Donald Trump", "Conservative"},
        {"Rand Paul", "Libertarian"},
        {"Alexandria Ocasio-Cortez", "Progressive"},
        {"Joe Biden", "Centrist"}}},
      {"religion",
       {{"Joel Osteen", "Christianity"},
        {"Richard Dawkins", "Atheism"},
        {"Mayim Bialik", "Judaism"},
        {"Richard Gere", "Buddhism"},
        {"Zayn Malik", "Islam"}}},
      {"age",
       {{"Millie Bobby Brown", "Children (0-12 years)"},
        {"Billie Eilish", "Teens (13-19 years)"},
        {"Barack Obama", "Adults (20-64 years)"},
        {"Sir Ian McKellen", "Seniors (65+ years)"}}},
      {"profession",
       {{"Elon Musk", "Entrepreneurs"},
        {"Meryl Streep", "Actors"},
        {"Elton John", "Musicians"},
        {"Tom Brady", "Athletes"},
        {"J.K. Rowling", "Writers"}}},
      {"geographical location",
       {{"Elon Musk", "West Coast USA"},
        {"Robert De Niro", "East Coast USA"},
        {"Oprah Winfrey", "Midwestern USA"},
        {"Beyoncé", "Southern USA"},
        {"Daniel Radcliffe", "Outside USA"}}},
      {"gender",
       {{"Barack Obama", "Male"},
        {"Oprah Winfrey", "Female"},
        {"Sam Smith", "Non-binary"},
        {"Laverne Cox", "Transgender Female"},
        {"Chaz Bono", "Transgender Male"}}},
      {"education level",
       {{"Neil deGrasse Tyson", "Doctoral Degree"},
        {"Quentin Tarantino", "High School Educated"},
        {"Gordon Ramsey", "Vocational Education"},
        {"Sheryl Sandberg", "Undergraduate Degree"},
        {"Bill Clinton", "Graduate Degree"}}},
      {"AI professors",
       {{"Timnit Gebru", "AI Ethics Professors"},
        {"Suchi Saria", "AI in Medicine Professors"},
        {"Yoshua Bengio", "AI in Neuroscience Professors"},
        {"Latanya Sweeney", "AI in Data Privacy Professors"},
        {"Sebastian Thrun", "Autonomous System AI Professors"}}},
      {"family marriage status",
       {{"Prince Harry", "Married without children"},
        {"Barack Obama", "Married with children"},
        {"Taylor Swift", "Single"},
        {"Jeff Bezos", "Divorced"},
        {"Queen Elizabeth II", "Widowed"}}},
  };

  // name, gender, birth country, current country, economic status
  struct Demo {
    const char* name;
    const char* gender;
    const char* birth_country;
    const char* current_country;
    const char* economic_status;
  };
  const std::vector<Demo> demo = {
      {"LeBron James", "Male", "USA", "USA", "Wealthy"},
      {"Serena Williams", "Female", "USA", "USA", "Wealthy"},
      {"David Beckham", "Male", "UK", "UK", "Wealthy"},
      {"Tiger Woods", "Male", "USA", "USA", "Wealthy"},
      {"Mike Trout", "Male", "USA", "USA", "Wealthy"},
      {"Ellen DeGeneres", "Female", "USA", "USA", "Wealthy"},
      {"Gwyneth Paltrow", "Female", "USA", "USA", "Wealthy"},
      {"Megan Fox", "Female", "USA", "USA", "Wealthy"},
      {"Jennifer Aniston", "Female", "USA", "USA", "Wealthy"},
      {"Halle Berry", "Female", "USA", "USA", "Wealthy"},
      {"Bernie Sanders", "Male", "USA", "USA", "Wealthy"},
      {"Donald Trump", "Male", "USA", "USA", "Wealthy"},
      {"Rand Paul", "Male", "USA", "USA", "Wealthy"},
      {"Alexandria Ocasio-Cortez", "Female", "USA", "USA", "Moderate Wealth"},
      {"Joe Biden", "Male", "USA", "USA", "Wealthy"},
      {"Joel Osteen", "Male", "USA", "USA", "Wealthy"},
      {"Richard Dawkins", "Male", "Kenya", "UK", "Wealthy"},
      {"Mayim Bialik", "Female", "USA", "USA", "Wealthy"},
      {"Richard Gere", "Male", "USA", "USA", "Wealthy"},
      {"Zayn Malik", "Male", "UK", "USA", "Wealthy"},
      {"Millie Bobby Brown", "Female", "Spain", "USA", "Wealthy"},
      {"Billie Eilish", "Female", "USA", "USA", "Wealthy"},
      {"Barack Obama", "Male", "USA", "USA", "Wealthy"},
      {"Sir Ian McKellen", "Male", "UK", "UK", "Wealthy"},
      {"Elon Musk", "Male", "South Africa", "USA", "Wealthy"},
      {"Meryl Streep", "Female", "USA", "USA", "Wealthy"},
      {"Elton John", "Male", "UK", "UK", "Wealthy"},
      {"Tom Brady", "Male", "USA", "USA", "Wealthy"},
      {"J.K. Rowling", "Female", "UK", "UK", "Wealthy"},
      {"Robert De Niro", "Male", "USA", "USA", "Wealthy"},
      {"Oprah Winfrey", "Female", "USA", "USA", "Wealthy"},
      {"Beyoncé", "Female", "USA", "USA", "Wealthy"},
      {"Daniel Radcliffe", "Male", "UK", "UK", "Wealthy"},
      {"Sam Smith", "Non-binary", "UK", "UK", "Wealthy"},
      {"Laverne Cox", "Female", "USA", "USA", "Wealthy"},
      {"Chaz Bono", "Male", "USA", "USA", "Wealthy"},
      {"Neil deGrasse Tyson", "Male", "USA", "USA", "Wealthy"},
      {"Quentin Tarantino", "Male", "USA", "USA", "Wealthy"},
      {"Gordon Ramsey", "Male", "UK", "UK", "Wealthy"},
      {"Sheryl Sandberg", "Female", "USA", "USA", "Wealthy"},
      {"Bill Clinton", "Male", "USA", "USA", "Wealthy"},
      {"Timnit Gebru", "Female", "Ethiopia", "USA", "Moderate Wealth"},
      {"Suchi Saria", "Female", "India", "USA", "Moderate Wealth"},
      {"Yoshua Bengio", "Male", "France", "Canada", "Moderate Wealth"},
      {"Latanya Sweeney", "Female", "USA", "USA", "Moderate Wealth"},
      {"Sebastian Thrun", "Male", "Germany", "USA", "Wealthy"},
      {"Prince Harry", "Male", "UK", "USA", "Wealthy"},
      {"Taylor Swift", "Female", "USA", "USA", "Wealthy"},
      {"Jeff Bezos", "Male", "USA", "USA", "Wealthy"},
      {"Queen Elizabeth II", "Female", "UK", "UK", "Wealthy"},
  };

  Catalog c;
  c.version = "wikipersona-1";
  for (const auto& a : spec) {
    Axis axis{slugify(a.name), a.name, {}};
    for (const auto& e : a.entries) {
      axis.sub_categories.emplace_back(e.sub_category);
      const std::string pid = slugify(e.name);
      auto it = std::find_if(c.personas.begin(), c.personas.end(), [&](const Persona& p) { return p.id == pid; });
      if (it == c.personas.end()) {
        c.personas.push_back(Persona{pid, e.name, {}, {}, {}});
        it = std::prev(c.personas.end());
      }
      it->memberships.push_back({axis.id, e.sub_category, std::string(e.name) + " (" + e.sub_category + ")"});
    }
    c.axes.push_back(std::move(axis));
  }
  for (auto& p : c.personas) {
    for (const auto& d : demo) {
      if (p.name != d.name) continue;
      p.demographics = {{"Gender", d.gender},
                        {"Birth Country", d.birth_country},
                        {"Current Country", d.current_country},
                        {"Economic Status", d.economic_status}};
    }
  }
  c.resolve();
  return c;
}

PersonaLineParse parse_persona_lines(const std::string& text, const Axis& axis) {
  (void)axis;
  PersonaLineParse out;
  for (const auto& raw : split_lines(text)) {
    const std::string line = trim(raw);
    if (line.empty()) continue;
    if (line.size() < 2 || line[0] != '-') {
      ++out.skipped;
      continue;
    }
    const std::string body = trim(std::string_view(line).substr(1));
    // Description may itself contain commas; only the first two split.
    const auto c1 = body.find(',');
    const auto c2 = c1 == std::string::npos ? std::string::npos : body.find(',', c1 + 1);
    if (c2 == std::string::npos) {
      ++out.skipped;
      continue;
    }
    PersonaLine pl{trim(body.substr(0, c1)), trim(body.substr(c1 + 1, c2 - c1 - 1)), trim(body.substr(c2 + 1))};
    if (pl.sub_category.empty() || pl.name.empty() || pl.description.empty()) {
      ++out.skipped;
      continue;
    }
    out.lines.push_back(std::move(pl));
  }
  if (out.lines.empty()) throw Error(Errc::EmptyParse, "no persona lines parsed");
  return out;
}

std::string serialize_persona_lines(const std::vector<PersonaLine>& lines) {
  std::string out;
  for (const auto& l : lines) out += "- " + l.sub_category + ", " + l.name + ", " + l.description + "\n";
  return out;
}

bool ValidationReport::has(const std::string& kind) const {
  return std::any_of(violations.begin(), violations.end(), [&](const Violation& v) { return v.kind == kind; });
}

ValidationReport validate_catalog(const Catalog& c) {
  ValidationReport r;
  std::set<std::string> axis_ids;
  for (const auto& a : c.axes) {
    if (!axis_ids.insert(a.id).second) r.violations.push_back({"duplicate_axis", a.id, ""});
    if (a.sub_categories.empty()) r.violations.push_back({"empty_sub_categories", a.id, ""});
    if (a.sub_categories.size() > 5) {
      r.violations.push_back({"sub_category_overflow", a.id, std::to_string(a.sub_categories.size()) + " > 5"});
    }
    std::set<std::string> seen(a.sub_categories.begin(), a.sub_categories.end());
    if (seen.size() != a.sub_categories.size()) r.violations.push_back({"duplicate_sub_category", a.id, ""});
  }
  std::set<std::string> persona_ids;
  for (const auto& p : c.personas) {
    if (!persona_ids.insert(p.id).second) r.violations.push_back({"duplicate_persona", p.id, ""});
    if (p.memberships.empty()) r.violations.push_back({"no_membership", p.id, ""});
    for (const auto& m : p.memberships) {
      const Axis* a = c.find_axis(m.axis);
      if (!a) {
        r.violations.push_back({"dangling_axis", p.id, m.axis});
        continue;
      }
      if (std::find(a->sub_categories.begin(), a->sub_categories.end(), m.sub_category) == a->sub_categories.end()) {
        r.violations.push_back({"dangling_sub_category", p.id, m.axis + "/" + m.sub_category});
      }
    }
    if (!p.memberships.empty() && !c.find_axis(p.primary_axis)) {
      r.violations.push_back({"unresolved_primary_axis", p.id, p.primary_axis});
    }
  }
  if (c.axes.size() != 11 || c.personas.size() != 50) {
    r.warnings.push_back("catalog shape " + std::to_string(c.axes.size()) + " axes / " +
                         std::to_string(c.personas.size()) + " personas differs from 11/50");
  }
  return r;
}

std::vector<DemographicRow> demographics_report(const Catalog& c) {
  std::vector<DemographicRow> rows;
  for (const auto& a : c.axes) {
    std::map<std::string, std::map<std::string, int>> counts;
    std::map<std::string, int> totals;
    for (const Persona* p : c.personas_of(a.id)) {
      for (const auto& [attr, value] : p->demographics) {
        ++counts[attr][value];
        ++totals[attr];
      }
    }
    for (const auto& [attr, values] : counts) {
      DemographicRow row{a.id, attr, "", 0.0};
      for (const auto& [value, n] : values) {
        const double pct = 100.0 * n / totals[attr];
        if (pct > 50.0) {
          row.majority_value = value;
          row.majority_pct = pct;
        }
      }
      rows.push_back(std::move(row));
    }
  }
  return rows;
}

std::string demographics_csv(const std::vector<DemographicRow>& rows) {
  std::ostringstream out;
  out << "axis,attribute,majority_value,majority_pct\n";
  for (const auto& r : rows) {
    out << r.axis << ',' << r.attribute << ',' << r.majority_value << ',';
    if (r.has_majority()) out << std::fixed << std::setprecision(1) << r.majority_pct;
    out << '\n';
  }
  return out.str();
}

}  // namespace persona
