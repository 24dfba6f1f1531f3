// Command-line entry point for every pipeline stage and report.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "persona/catalog.hpp"
#include "persona/error.hpp"
#include "persona/eval.hpp"
#include "persona/judge.hpp"
#include "persona/pipeline.hpp"
#include "persona/store.hpp"
#include "persona/templates.hpp"
#include "persona/util.hpp"

namespace fs = std::filesystem;
using namespace persona;

namespace {

struct Globals {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  bool mock = false;
  std::string scale;
  std::string summary_path;
  std::string data_dir;
  std::optional<std::size_t> workers;
  std::string fault;
  bool no_cache = false;
  std::optional<std::size_t> max_axes;
  std::optional<std::size_t> max_per_axis;
};

RunConfig resolve_config(const Globals& g) {
  nlohmann::json file = nlohmann::json::object();
  if (!g.config_path.empty()) file = read_json(g.config_path);
  std::string scale = !g.scale.empty() ? g.scale : file.value("scale", std::string("full"));
  RunConfig c = RunConfig::preset(scale);
  merge_config(file, c);
  if (g.seed) c.seed = *g.seed;
  if (g.mock) c.mock = true;
  if (!g.data_dir.empty()) c.data_dir = g.data_dir;
  if (g.workers) c.workers = *g.workers;
  if (g.no_cache) c.cache = false;
  if (g.max_axes) c.max_axes = *g.max_axes;
  if (g.max_per_axis) c.max_per_axis = *g.max_per_axis;
  if (!g.fault.empty()) {
    if (g.fault != "outage") throw Error(Errc::ConfigError, "unknown fault: " + g.fault);
    if (!c.mock) throw Error(Errc::ConfigError, "--fault needs --mock");
    c.mock_outage = true;
  }
  validate_config(c);
  return c;
}

nlohmann::json report_json(const StageReport& r) {
  return {{"stage", r.stage}, {"counts", r.counts}, {"warnings", r.warnings}, {"provider_calls", r.provider_calls}};
}

nlohmann::json validation_json(const ValidationReport& v) {
  nlohmann::json out = {{"valid", v.valid()}, {"violations", nlohmann::json::array()}, {"warnings", v.warnings}};
  for (const auto& x : v.violations) out["violations"].push_back({{"kind", x.kind}, {"subject", x.subject}, {"detail", x.detail}});
  return out;
}

void emit(const std::string& out_path, const std::string& text) {
  if (out_path.empty() || out_path == "-") {
    std::cout << text;
  } else {
    write_text_atomic(out_path, text);
  }
}

std::vector<std::string> read_labels(const std::string& path) {
  std::vector<std::string> out;
  for (const auto& v : read_json(path)) out.push_back(v.is_string() ? v.get<std::string>() : v.dump());
  return out;
}

// An explicit input file names the data directory it lives in.
void input_file(Globals& g, const std::string& path, const std::string& expected_name) {
  if (path.empty()) return;
  const fs::path f(path);
  if (f.filename() != expected_name) {
    throw Error(Errc::ConfigError, path + ": expected a file named " + expected_name + " inside a data directory");
  }
  if (!fs::exists(f)) throw Error(Errc::MissingArtifact, path);
  g.data_dir = f.parent_path().empty() ? "." : f.parent_path().string();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Personalized preference dataset pipeline"};
  app.require_subcommand(1);
  app.fallthrough();
  Globals g;
  app.add_option("--config", g.config_path, "JSON run configuration");
  app.add_option("--seed", g.seed, "Base seed for every stage");
  app.add_flag("--mock", g.mock, "Use the deterministic mock provider (no network)");
  app.add_option("--scale", g.scale, "full | desk")->check(CLI::IsMember({"full", "desk"}));
  app.add_option("--summary", g.summary_path, "Write a JSON summary here");
  app.add_option("--data", g.data_dir, "Data directory");
  app.add_option("--workers", g.workers, "Concurrent provider calls");
  app.add_option("--fault", g.fault, "Mock fault injection: outage");
  app.add_flag("--no-cache", g.no_cache, "Do not persist provider responses");
  app.add_option("--max-axes", g.max_axes, "Keep only the first N axes");
  app.add_option("--max-per-axis", g.max_per_axis, "Keep at most N personas per axis");

  nlohmann::json summary = {{"command", nlohmann::json::array()}};
  for (int i = 1; i < argc; ++i) summary["command"].push_back(argv[i]);
  std::function<void()> action;

  auto with_pipeline = [&](auto fn) {
    return [&, fn] {
      Pipeline p(resolve_config(g), &std::cerr);
      fn(p);
      summary["upstream_calls"] = p.upstream_calls();
    };
  };
  auto stage = [&](StageReport (Pipeline::*fn)()) {
    return with_pipeline([&, fn](Pipeline& p) { summary["stages"].push_back(report_json((p.*fn)())); });
  };

  // catalog
  auto* cat = app.add_subcommand("catalog", "Persona catalog");
  cat->require_subcommand(1);
  std::string cat_path;
  std::string out_path;
  auto* cat_validate = cat->add_subcommand("validate", "Check a catalog file");
  cat_validate->add_option("path", cat_path)->required();
  cat_validate->callback([&] {
    action = [&] {
      Catalog c = load_catalog(cat_path);
      c.resolve();
      const auto v = validate_catalog(c);
      summary["validation"] = validation_json(v);
      for (const auto& x : v.violations) std::cerr << x.kind << ' ' << x.subject << ' ' << x.detail << '\n';
      for (const auto& w : v.warnings) std::cerr << "warning: " << w << '\n';
      if (!v.valid()) throw Error(Errc::PreconditionFailed, "catalog has " + std::to_string(v.violations.size()) + " violations");
      std::cout << "valid: " << c.axes.size() << " axes, " << c.personas.size() << " personas\n";
    };
  });
  auto* cat_demo = cat->add_subcommand("demographics", "Majority attributes per axis");
  cat_demo->add_option("path", cat_path)->required();
  cat_demo->add_option("--out", out_path);
  cat_demo->callback([&] {
    action = [&] {
      Catalog c = load_catalog(cat_path);
      c.resolve();
      emit(out_path, demographics_csv(demographics_report(c)));
    };
  });
  std::string axis_name;
  auto* cat_boot = cat->add_subcommand("bootstrap", "Ask the generator for personas of one axis");
  cat_boot->add_option("--axis", axis_name)->required();
  cat_boot->add_option("--out", out_path);
  cat_boot->callback([&] {
    action = with_pipeline([&](Pipeline& p) {
      GenRequest req;
      req.messages = {{"user", templates::persona_sampling(axis_name)}};
      req.seed = static_cast<std::int64_t>(derive_seed(p.config().seed, "bootstrap|" + axis_name) >> 1);
      req.model = p.config().http.models.judge;
      Axis axis{axis_name, axis_name, {}};
      const auto parsed = parse_persona_lines(p.provider().chat(req), axis);
      summary["skipped_lines"] = parsed.skipped;
      emit(out_path, serialize_persona_lines(parsed.lines));
    });
  });
  cat->add_subcommand("init", "Write the run's catalog into the data directory")->callback([&] {
    action = stage(&Pipeline::catalog);
  });

  // prompts
  auto* prompts = app.add_subcommand("prompts", "Question generation");
  prompts->require_subcommand(1);
  int n_personal = 0;
  int n_divergent = 0;
  auto* pgen = prompts->add_subcommand("gen", "Generate, deduplicate and split questions");
  pgen->add_option("--n-personal", n_personal);
  pgen->add_option("--n-divergent", n_divergent);
  std::string gen_kind;
  int n_any = 0;
  pgen->add_option("--kind", gen_kind, "Which count --n sets; both when omitted")->check(CLI::IsMember({"personal", "divergent"}));
  pgen->add_option("--n", n_any, "Questions per persona (personal) or per axis (divergent)");
  pgen->callback([&] {
    action = [&] {
      RunConfig c = resolve_config(g);
      if (n_any && gen_kind != "divergent") c.params.n_personal = n_any;
      if (n_any && gen_kind != "personal") c.params.n_divergent = n_any;
      if (n_personal) c.params.n_personal = n_personal;
      if (n_divergent) c.params.n_divergent = n_divergent;
      Pipeline p(c, &std::cerr);
      summary["stages"].push_back(report_json(p.prompts()));
      summary["upstream_calls"] = p.upstream_calls();
    };
  });
  prompts->add_subcommand("split", "Re-assign train/test halves")->callback([&] {
    action = [&] {
      const RunConfig c = resolve_config(g);
      auto records = read_records<PromptRecord>(c.data_dir + "/prompts.jsonl");
      for (auto& r : records) {
        r.split = Split::Unassigned;
        r.train_excluded_persona_ids.clear();
      }
      records = split_prompts(std::move(records), SplitOptions{derive_seed(c.seed, "split"), 0});
      write_records(c.data_dir + "/prompts.jsonl", records);
      summary["prompts"] = records.size();
    };
  });
  auto* poverlap = prompts->add_subcommand("overlap", "Train/test similarity per persona");
  poverlap->add_option("--out", out_path);
  poverlap->callback([&] {
    action = [&] {
      const RunConfig c = resolve_config(g);
      std::vector<PromptRecord> train;
      std::vector<PromptRecord> test;
      for (auto& r : read_records<PromptRecord>(c.data_dir + "/prompts.jsonl")) {
        (r.split == Split::Train ? train : test).push_back(r);
      }
      emit(out_path, overlap_csv(prompt_overlap_report(train, test)));
    };
  });

  // responses
  auto* responses = app.add_subcommand("responses", "Candidate sampling and filtering");
  responses->require_subcommand(1);
  int cots = 0;
  int per_cot = 0;
  auto* rsample = responses->add_subcommand("sample", "Sample CoT-conditioned candidates and score rewards");
  rsample->add_option("--cots", cots);
  rsample->add_option("--per-cot", per_cot);
  std::string in_path;
  rsample->add_option("--prompts", in_path, "prompts.jsonl inside the data directory to use");
  rsample->callback([&] {
    action = [&] {
      input_file(g, in_path, "prompts.jsonl");
      RunConfig c = resolve_config(g);
      if (cots) c.params.cots = cots;
      if (per_cot) c.params.per_cot = per_cot;
      Pipeline p(c, &std::cerr);
      summary["stages"].push_back(report_json(p.candidates()));
      summary["upstream_calls"] = p.upstream_calls();
    };
  });
  std::size_t window = 0;
  std::size_t k = 0;
  std::string farthest;
  auto* rfilter = responses->add_subcommand("filter", "Reward window, then k-means diversity selection");
  rfilter->add_option("--w", window);
  rfilter->add_option("--k", k);
  rfilter->add_option("--farthest", farthest)->check(CLI::IsMember({"sum", "min"}));
  rfilter->add_option("--candidates", in_path, "candidates.jsonl inside the data directory to use");
  rfilter->callback([&] {
    action = [&] {
      input_file(g, in_path, "candidates.jsonl");
      RunConfig c = resolve_config(g);
      if (window) c.params.window = window;
      if (k) c.params.k = k;
      if (!farthest.empty()) c.params.farthest = parse_farthest_mode(farthest);
      Pipeline p(c, &std::cerr);
      summary["stages"].push_back(report_json(p.finalists()));
      summary["upstream_calls"] = p.upstream_calls();
    };
  });

  // label
  auto* label = app.add_subcommand("label", "Personal-judge labeling");
  label->require_subcommand(1);
  auto* ltour = label->add_subcommand("tournament", "Single-elimination tournaments over finalists");
  ltour->add_option("--finalists", in_path, "finalists.jsonl inside the data directory to use");
  ltour->callback([&] {
    action = [&] {
      input_file(g, in_path, "finalists.jsonl");
      stage(&Pipeline::pairs)();
    };
  });

  // prefix
  auto* prefix = app.add_subcommand("prefix", "Persona prefixes");
  prefix->require_subcommand(1);
  std::vector<std::string> kinds;
  int shots = 0;
  std::string strategy;
  auto* pbuild = prefix->add_subcommand("build", "Build prefixes for every persona");
  pbuild->add_option("--kind", kinds, "Repeatable; default all kinds");
  pbuild->add_option("--shots", shots);
  pbuild->add_option("--strategy", strategy)->check(CLI::IsMember({"random", "bm25", "embedding"}));
  pbuild->callback([&] {
    action = [&] {
      RunConfig c = resolve_config(g);
      if (!kinds.empty()) {
        c.params.prefix_kinds.clear();
        for (const auto& s : kinds) c.params.prefix_kinds.push_back(parse_prefix_kind(s));
      }
      if (shots) c.params.fewshot_shots = c.params.persona_shots = shots;
      if (!strategy.empty()) c.params.shot_strategy = parse_shot_strategy(strategy);
      Pipeline p(c, &std::cerr);
      summary["stages"].push_back(report_json(p.prefixes()));
      summary["upstream_calls"] = p.upstream_calls();
    };
  });
  auto* preport = prefix->add_subcommand("report", "ROUGE-1 of prefixes against persona gold");
  preport->add_option("--out", out_path);
  preport->callback([&] {
    action = [&] {
      const RunConfig c = resolve_config(g);
      const auto prefixes = read_records<Prefix>(c.data_dir + "/prefixes.jsonl");
      std::map<std::string, Prefix> golds;
      for (const auto& p : prefixes) {
        if (p.kind == PrefixKind::PersonaGold) golds[p.persona_id] = p;
      }
      emit(out_path, prefix_quality_csv(prefix_quality_report(prefixes, golds, derive_seed(c.seed, "prefix-report"))));
    };
  });

  // folds
  auto* folds = app.add_subcommand("folds", "Cross-validation folds");
  folds->require_subcommand(1);
  int n_folds = 0;
  auto* fmake = folds->add_subcommand("make", "Stratified folds over personas");
  fmake->add_option("--k", n_folds);
  fmake->callback([&] {
    action = [&] {
      RunConfig c = resolve_config(g);
      if (n_folds) c.params.folds = n_folds;
      Pipeline p(c, &std::cerr);
      summary["stages"].push_back(report_json(p.folds()));
    };
  });

  // eval
  auto* ev = app.add_subcommand("eval", "Evaluation");
  ev->require_subcommand(1);
  std::string agg;
  std::string chat_template;
  auto* eacc = ev->add_subcommand("accuracy", "Reference-free preference accuracy on test pairs");
  eacc->add_option("--prefix", kinds, "Repeatable; default all configured kinds");
  eacc->add_option("--agg", agg)->check(CLI::IsMember({"mean", "sum"}));
  eacc->add_option("--template", chat_template)->check(CLI::IsMember({"raw", "zephyr", "chatml"}));
  eacc->callback([&] {
    action = [&] {
      RunConfig c = resolve_config(g);
      if (!kinds.empty()) {
        c.params.prefix_kinds.clear();
        for (const auto& s : kinds) c.params.prefix_kinds.push_back(parse_prefix_kind(s));
      }
      if (!agg.empty()) c.params.aggregation = parse_aggregation(agg);
      if (!chat_template.empty()) c.params.chat_template = chat_template;
      Pipeline p(c, &std::cerr);
      summary["stages"].push_back(report_json(p.eval()));
      summary["upstream_calls"] = p.upstream_calls();
      std::cout << read_text(c.data_dir + "/results/accuracy_summary.csv");
    };
  });
  auto* eagree = ev->add_subcommand("agreement", "Personas per distinct winner on divergent prompts");
  eagree->add_option("--out", out_path);
  eagree->callback([&] {
    action = [&] {
      const RunConfig c = resolve_config(g);
      const auto b = load_bundle(c.data_dir);
      std::ostringstream s;
      s << "axis,prompts,mean,std\n";
      for (const auto& a : agreement_per_axis(b.pairs, b.prompts)) {
        s << a.axis_id << ',' << a.concentration.n << ',' << a.concentration.mean << ',' << a.concentration.std << '\n';
      }
      emit(out_path, s.str());
    };
  });
  std::string a_path;
  std::string b_path;
  auto* ekappa = ev->add_subcommand("kappa", "Cohen's kappa between two label files (JSON arrays)");
  ekappa->add_option("--a", a_path)->required();
  ekappa->add_option("--b", b_path)->required();
  ekappa->callback([&] {
    action = [&] {
      const double kappa = cohen_kappa(read_labels(a_path), read_labels(b_path));
      summary["kappa"] = kappa;
      std::cout << kappa << '\n';
    };
  });
  std::string labels_path;
  auto* ealpha = ev->add_subcommand("alpha", "Nominal Krippendorff's alpha (JSON annotator x item, null = missing)");
  ealpha->add_option("--labels", labels_path)->required();
  ealpha->callback([&] {
    action = [&] {
      std::vector<std::vector<std::optional<std::string>>> m;
      for (const auto& row : read_json(labels_path)) {
        auto& r = m.emplace_back();
        for (const auto& v : row) {
          if (v.is_null()) {
            r.emplace_back(std::nullopt);
          } else {
            r.emplace_back(v.is_string() ? v.get<std::string>() : v.dump());
          }
        }
      }
      const double alpha = krippendorff_alpha(m);
      summary["alpha"] = alpha;
      std::cout << alpha << '\n';
    };
  });
  std::string tax_pairs;
  auto* etax = ev->add_subcommand("tax", "Reward accuracy on external chosen/rejected pairs");
  etax->add_option("--pairs", tax_pairs)->required();
  etax->add_option("--prefix", kinds, "Also score with each persona's prefix of this kind");
  etax->add_option("--agg", agg)->check(CLI::IsMember({"mean", "sum"}));
  etax->add_option("--out", out_path);
  etax->callback([&] {
    action = with_pipeline([&](Pipeline& p) {
      ScoringJob job;
      job.aggregation = agg.empty() ? Aggregation::Sum : parse_aggregation(agg);
      job.chat_template_id = p.config().params.chat_template;
      job.workers = p.config().workers;
      std::vector<Prefix> prefixes;
      if (!kinds.empty()) {
        for (auto& pf : read_records<Prefix>(p.path("prefixes.jsonl"))) {
          if (std::find(kinds.begin(), kinds.end(), to_string(pf.kind)) != kinds.end()) prefixes.push_back(pf);
        }
      }
      emit(out_path, tax_csv(alignment_tax_score(p.provider(), job, load_external_pairs(tax_pairs), prefixes)));
    });
  });
  std::vector<std::string> system_paths;
  std::string questions_path;
  auto* ewin = ev->add_subcommand("winrate", "Pairwise win rates between systems' generations");
  ewin->add_option("--systems", system_paths, "JSONL files of {question_id, text}")->required()->expected(2, -1);
  ewin->add_option("--questions", questions_path, "JSONL of {id, persona_name, text}")->required();
  ewin->add_option("--out", out_path);
  ewin->callback([&] {
    action = with_pipeline([&](Pipeline& p) {
      std::vector<WinRateQuestion> questions;
      for (const auto& j : read_jsonl(questions_path)) {
        questions.push_back({j.at("id").get<std::string>(), j.at("persona_name").get<std::string>(),
                             j.at("text").get<std::string>()});
      }
      std::vector<WinRateSystem> systems;
      for (const auto& sp : system_paths) {
        WinRateSystem s{fs::path(sp).stem().string(), {}};
        for (const auto& j : read_jsonl(sp)) s.generations[j.at("question_id").get<std::string>()] = j.at("text").get<std::string>();
        systems.push_back(std::move(s));
      }
      JudgeOptions jo;
      jo.seed = derive_seed(p.config().seed, "winrate");
      jo.batch = p.config().params.judge_batch;
      jo.max_retries = p.config().params.judge_retries;
      jo.workers = p.config().workers;
      jo.model = p.config().http.models.judge;
      emit(out_path, win_rate_csv(win_rate_matrix(p.provider(), systems, questions, jo)));
    });
  });

  // report
  auto* report = app.add_subcommand("report", "Dataset reports");
  report->require_subcommand(1);
  report->add_subcommand("stats", "Write every report CSV under results/")->callback([&] {
    action = stage(&Pipeline::reports);
  });
  report->add_subcommand("validate", "Referential and shape checks over the bundle")->callback([&] {
    action = [&] {
      Pipeline p(resolve_config(g), &std::cerr);
      const auto v = p.validate();
      summary["validation"] = validation_json(v);
      for (const auto& x : v.violations) std::cerr << x.kind << ' ' << x.subject << ' ' << x.detail << '\n';
      if (!v.valid()) throw Error(Errc::PreconditionFailed, "bundle has " + std::to_string(v.violations.size()) + " violations");
      std::cout << "bundle valid\n";
    };
  });

  // export
  auto* exp = app.add_subcommand("export", "Training files");
  exp->require_subcommand(1);
  std::string export_kind = "none";
  std::optional<int> fold_id;
  auto* edpo = exp->add_subcommand("dpo", "JSONL {prompt, chosen, rejected, persona_id} of train pairs");
  edpo->add_option("--prefix", export_kind);
  edpo->add_option("--fold", fold_id, "Only this fold's train personas");
  edpo->add_option("--out", out_path)->required();
  edpo->callback([&] {
    action = [&] {
      const RunConfig c = resolve_config(g);
      const auto b = load_bundle(c.data_dir);
      std::optional<Fold> fold;
      if (fold_id) {
        for (const auto& f : b.folds) {
          if (f.fold_id == *fold_id) fold = f;
        }
        if (!fold) throw Error(Errc::MissingArtifact, "fold " + std::to_string(*fold_id) + " not in folds.json");
      }
      const auto rows = export_dpo(b, parse_prefix_kind(export_kind), fold);
      write_records(out_path, rows);
      summary["rows"] = rows.size();
    };
  });

  // pipeline
  auto* pipe = app.add_subcommand("pipeline", "Run stages end to end");
  pipe->require_subcommand(1);
  pipe->add_subcommand("all", "Every stage, then bundle validation")->callback([&] {
    action = [&] {
      Pipeline p(resolve_config(g), &std::cerr);
      for (const auto& r : p.run_all()) summary["stages"].push_back(report_json(r));
      summary["upstream_calls"] = p.upstream_calls();
      const auto v = p.validate();
      summary["validation"] = validation_json(v);
      for (const auto& x : v.violations) std::cerr << x.kind << ' ' << x.subject << ' ' << x.detail << '\n';
      if (!v.valid()) throw Error(Errc::PreconditionFailed, "bundle has " + std::to_string(v.violations.size()) + " violations");
    };
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  int code = 0;
  try {
    if (action) action();
    summary["status"] = "ok";
  } catch (const Error& e) {
    code = exit_code_for(e);
    std::cerr << "error: " << e.what() << '\n';
    summary["status"] = "error";
    summary["error"] = {{"code", std::string(errc_name(e.code()))}, {"message", e.what()}};
  } catch (const std::exception& e) {
    code = 1;
    std::cerr << "error: " << e.what() << '\n';
    summary["status"] = "error";
    summary["error"] = {{"code", "Internal"}, {"message", e.what()}};
  }
  summary["exit_code"] = code;
  if (!g.summary_path.empty()) {
    try {
      write_json(g.summary_path, summary);
    } catch (const std::exception& e) {
      std::cerr << "cannot write summary: " << e.what() << '\n';
    }
  }
  return code;
}
