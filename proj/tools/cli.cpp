#include "cli.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "weatherseg/checkpoint.hpp"
#include "weatherseg/dataset_io.hpp"
#include "weatherseg/error.hpp"
#include "weatherseg/evalkit.hpp"
#include "weatherseg/experiment.hpp"

namespace weatherseg::cli {
namespace fs = std::filesystem;
using config::Json;

namespace {

struct Common {
  std::string config_path;
  std::string out;
  std::vector<std::string> sets;
};

std::string now_iso() {
  const std::time_t t = std::time(nullptr);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&t));
  return buf;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw DataError("", "cannot write " + path.string());
  os << text;
}

void write_json(const fs::path& path, const Json& j) { write_text(path, j.dump(2) + "\n"); }

Json read_json(const fs::path& path) {
  std::ifstream is(path);
  if (!is) throw DataError("", "cannot read " + path.string());
  try {
    return Json::parse(is);
  } catch (const Json::exception& e) {
    throw DataError("", path.string() + ": " + e.what());
  }
}

// "--set a.b=v" entries plus leftover "--a.b=v" / "--a.b v" arguments.
std::vector<std::pair<std::string, std::string>> collect_overrides(const std::vector<std::string>& sets,
                                                                   const std::vector<std::string>& extras) {
  std::vector<std::pair<std::string, std::string>> out;
  auto split = [&](const std::string& s, const std::string& what) {
    const auto eq = s.find('=');
    if (eq == std::string::npos || eq == 0) throw ConfigError(s, what + " expects key=value");
    out.emplace_back(s.substr(0, eq), s.substr(eq + 1));
  };
  for (const auto& s : sets) split(s, "--set");
  for (std::size_t i = 0; i < extras.size(); ++i) {
    const std::string& a = extras[i];
    if (a.rfind("--", 0) != 0 || a.size() < 3) throw ConfigError(a, "unexpected argument");
    const std::string body = a.substr(2);
    if (body.find('=') != std::string::npos) {
      split(body, a);
    } else if (i + 1 < extras.size()) {
      out.emplace_back(body, extras[++i]);
    } else {
      throw ConfigError(body, "override flag without a value");
    }
  }
  return out;
}

fs::path resolve_out(const std::string& flag, const std::string& config_root, const std::string& command) {
  if (!flag.empty()) return flag;
  const char* env = std::getenv(kOutputRootEnv);
  const fs::path root = env && *env ? fs::path(env) : fs::path(config_root);
  return root / command;
}

void write_sidecar(const fs::path& file, const std::string& command, const std::vector<std::string>& args,
                   const std::string& started, const std::string& config_hash) {
  write_json(file, {{"command", command},
                    {"args", args},
                    {"started_at", started},
                    {"finished_at", now_iso()},
                    {"config_hash", config_hash}});
}

void check_classes(const exp::ExperimentConfig& cfg, const scene::Dataset& ds) {
  if (static_cast<int>(ds.manifest.class_names.size()) != cfg.network.classes)
    throw DataError("", "dataset has " + std::to_string(ds.manifest.class_names.size()) +
                            " classes, the network expects " + std::to_string(cfg.network.classes));
}

struct TrainSummary {
  Json json;
};

template <class T>
TrainSummary train_one(const exp::ExperimentConfig& cfg, const scene::Dataset& ds, const fs::path& out,
                       const std::optional<fs::path>& resume, std::ostream& log) {
  fs::create_directories(out);
  const exp::Runtime rt = exp::make_runtime(cfg);
  auto net = exp::build_network<T>(cfg, rt);
  const auto data = exp::make_training_data<T>(cfg, ds.train, rt);
  train::FitOptions opt;
  opt.out_dir = out;
  opt.resume = resume;
  opt.meta = {{"experiment", cfg.raw},
              {"config_hash", cfg.hash},
              {"dataset_hash", ds.manifest.config_hash},
              {"network", seg::to_json(cfg.network)},
              {"guidance_mode", std::string(guide::to_string(cfg.network.guidance))},
              {"param_count", net->param_count()}};
  opt.on_step = [&](const train::StepRecord& r) {
    if ((r.step + 1) % 100 == 0)
      log << "step " << r.step + 1 << " loss " << r.loss.total << " lr " << r.lr << "\n";
  };
  write_json(out / "config.json", cfg.raw);
  const train::FitResult res = train::fit(*net, cfg.training, data.train, data.val, opt);
  TrainSummary s;
  s.json = {{"config_hash", cfg.hash},
            {"dataset_hash", ds.manifest.config_hash},
            {"guidance_mode", std::string(guide::to_string(cfg.network.guidance))},
            {"self_attention_control", cfg.network.self_attention_control},
            {"param_count", net->param_count()},
            {"injection_param_count", net->injection_param_count()},
            {"train_examples", data.train.size()},
            {"val_examples", data.val.size()},
            {"total_steps", res.total_steps},
            {"final_loss", res.log.empty() ? Json(nullptr) : Json(res.log.back().loss.total)},
            {"best_val_miou", res.best_val_miou},
            {"best_step", res.best_step},
            {"final_val_miou", res.final_val_miou}};
  if (const auto* g = net->guidance()) {
    s.json["guidance_tokens"] = g->tokens();
    s.json["guidance_width"] = g->context_dim();
  }
  write_json(out / "train_summary.json", s.json);
  return s;
}

template <class T>
eval::EvalReport eval_one(const exp::ExperimentConfig& cfg, const fs::path& checkpoint, const scene::Dataset& ds,
                          const fs::path& out) {
  fs::create_directories(out);
  const exp::Runtime rt = exp::make_runtime(cfg);
  auto net = exp::build_network<T>(cfg, rt);
  ckpt::load(checkpoint, *net, static_cast<train::Optimizer<T>*>(nullptr));
  eval::EvalReport r = exp::evaluate(cfg, *net, rt, ds.split(cfg.eval.split), ds.manifest.class_names);
  write_json(out / "eval_report.json", eval::to_json(r));
  Json gap = Json::object();
  for (const auto& s : r.strata) {
    Json pc = Json::object();
    for (std::size_t c = 0; c < r.class_names.size(); ++c)
      pc[r.class_names[c]] = s.gap.per_class[c] ? Json(*s.gap.per_class[c]) : Json(nullptr);
    gap[s.name] = {{"miou", s.gap.miou}, {"per_class", pc}, {"sample_ids", s.clear.sample_ids.size()}};
  }
  write_json(out / "paired_gap.json", gap);
  write_text(out / "eval_table.txt", eval::to_table(r));
  return r;
}

exp::ExperimentConfig config_from_checkpoint(const fs::path& checkpoint,
                                             const std::vector<std::pair<std::string, std::string>>& overrides,
                                             std::string* dtype) {
  const Json header = ckpt::read_header(checkpoint);
  const Json meta = header.value("meta", Json::object());
  if (!meta.contains("experiment")) throw DataError("", checkpoint.string() + " carries no experiment config");
  Json raw = meta.at("experiment");
  for (const auto& [k, v] : overrides) config::apply_override(raw, k, v);
  *dtype = header.value("dtype", "float32");
  return exp::parse_experiment(raw);
}

int cmd_gen_data(const Common& c, const std::vector<std::string>& extras, std::ostream& out) {
  const std::string started = now_iso();
  const auto cfg = exp::load_experiment(c.config_path, collect_overrides(c.sets, extras));
  const fs::path dir = resolve_out(c.out, cfg.output_dir, "data");
  const scene::Dataset ds = scene::generate_dataset(cfg.data);
  fs::create_directories(dir);
  const auto m = scene::write_dataset(ds, dir);
  out << "wrote " << ds.train.size() << " train and " << ds.test.size() << " test scenes to " << dir.string()
      << " (config " << m.config_hash << ")\n";
  for (const auto& [name, split] : m.splits) {
    for (const auto& [set, n] : split.effect_set_counts) out << "  " << name << " " << set << ": " << n << "\n";
  }
  // Kept beside the dataset so the dataset directory itself stays byte-reproducible.
  write_sidecar(fs::path(dir.string() + ".run_info.json"), "gen-data", {}, started, cfg.hash);
  return kOk;
}

int cmd_train(const Common& c, const std::string& dataset, const std::string& resume,
              const std::vector<std::string>& extras, const std::vector<std::string>& args, std::ostream& out) {
  const std::string started = now_iso();
  const auto cfg = exp::load_experiment(c.config_path, collect_overrides(c.sets, extras));
  const fs::path dir = resolve_out(c.out, cfg.output_dir, "train");
  const scene::Dataset ds = scene::load_dataset(dataset);
  check_classes(cfg, ds);
  std::optional<fs::path> res;
  if (!resume.empty()) res = resume;
  const TrainSummary s = cfg.precision == "float64" ? train_one<double>(cfg, ds, dir, res, out)
                                                    : train_one<float>(cfg, ds, dir, res, out);
  out << s.json.dump(2) << "\n";
  write_sidecar(dir / "run_info.json", "train", args, started, cfg.hash);
  return kOk;
}

int cmd_eval(const Common& c, const std::string& checkpoint, const std::string& dataset,
             const std::vector<std::string>& extras, const std::vector<std::string>& args, std::ostream& out) {
  const std::string started = now_iso();
  std::string dtype;
  const auto cfg = config_from_checkpoint(checkpoint, collect_overrides(c.sets, extras), &dtype);
  const fs::path dir = resolve_out(c.out, cfg.output_dir, "eval");
  const scene::Dataset ds = scene::load_dataset(dataset);
  check_classes(cfg, ds);
  const eval::EvalReport r = dtype == "float64" ? eval_one<double>(cfg, checkpoint, ds, dir)
                                                : eval_one<float>(cfg, checkpoint, ds, dir);
  out << eval::to_table(r);
  write_sidecar(dir / "run_info.json", "eval", args, started, cfg.hash);
  return kOk;
}

std::string fmt(double v, const char* f = "%.4f") {
  char b[32];
  std::snprintf(b, sizeof b, f, v);
  return b;
}

int cmd_ablate(const Common& c, const std::string& dataset, const std::vector<std::string>& extras,
               const std::vector<std::string>& args, std::ostream& out) {
  const std::string started = now_iso();
  const auto cfg = exp::load_experiment(c.config_path, collect_overrides(c.sets, extras));
  const fs::path dir = resolve_out(c.out, cfg.output_dir, "ablate");
  const scene::Dataset ds = scene::load_dataset(dataset);
  check_classes(cfg, ds);
  fs::create_directories(dir);
  Json rows = Json::array();
  for (const std::string& v : cfg.ablate.variants) {
    out << "== " << v << "\n";
    auto vc = exp::variant_config(cfg, v);
    vc.eval.split = "test";
    const fs::path vdir = dir / v;
    const bool dbl = vc.precision == "float64";
    const TrainSummary s = dbl ? train_one<double>(vc, ds, vdir, std::nullopt, out)
                               : train_one<float>(vc, ds, vdir, std::nullopt, out);
    const eval::EvalReport r = dbl ? eval_one<double>(vc, vdir / "last.ckpt", ds, vdir)
                                   : eval_one<float>(vc, vdir / "last.ckpt", ds, vdir);
    Json row = {{"variant", v},
                {"param_count", s.json.at("param_count")},
                {"injection_param_count", s.json.at("injection_param_count")},
                {"class_names", r.class_names}};
    if (s.json.contains("guidance_tokens"))
      row["guidance_shape"] = {s.json.at("guidance_tokens"), s.json.at("guidance_width")};
    for (const auto& st : r.strata) {
      row[st.name] = {{"clear_miou", st.clear.acc.miou()},
                      {"degraded_miou", st.degraded.acc.miou()},
                      {"gap", st.gap.miou}};
    }
    rows.push_back(row);
  }
  std::ostringstream md;
  md << "| variant | params | injection params | guidance tokens | clear mIoU | degraded mIoU | gap | multi gap |\n";
  md << "|---|---:|---:|---|---:|---:|---:|---:|\n";
  for (const auto& r : rows) {
    std::string shape = "-";
    if (r.contains("guidance_shape"))
      shape = std::to_string(r["guidance_shape"][0].get<int>()) + "x" + std::to_string(r["guidance_shape"][1].get<int>());
    const Json& all = r.at("all");
    md << "| " << r["variant"].get<std::string>() << " | " << r["param_count"].get<long long>() << " | "
       << r["injection_param_count"].get<long long>() << " | " << shape << " | "
       << fmt(all["clear_miou"].get<double>()) << " | " << fmt(all["degraded_miou"].get<double>()) << " | "
       << fmt(all["gap"].get<double>(), "%+.4f") << " | "
       << (r.contains("multi") ? fmt(r["multi"]["gap"].get<double>(), "%+.4f") : std::string("-")) << " |\n";
  }
  write_json(dir / "ablation.json", {{"config_hash", cfg.hash}, {"rows", rows}});
  write_text(dir / "ablation_table.md", md.str());
  out << md.str();
  write_sidecar(dir / "run_info.json", "ablate", args, started, cfg.hash);
  return kOk;
}

int cmd_analyze_gap(const std::vector<std::string>& inputs, const std::string& out_flag,
                    const std::vector<std::string>& args, std::ostream& out) {
  const std::string started = now_iso();
  if (inputs.empty()) throw ConfigError("inputs", "at least one eval report is required");
  std::ostringstream md, csv;
  md << "| report | stratum | images | clear mIoU | degraded mIoU | gap |\n|---|---|---:|---:|---:|---:|\n";
  csv << "report,stratum,images,clear_miou,degraded_miou,gap\n";
  for (const std::string& in : inputs) {
    fs::path p = in;
    if (fs::is_directory(p)) p /= "eval_report.json";
    const eval::EvalReport r = eval::eval_report_from_json(read_json(p));
    for (const char* name : {"all", "single", "multi"}) {
      const eval::Stratum* s = r.find(name);
      if (!s) continue;
      const eval::Gap g = eval::paired_gap(s->clear, s->degraded);
      const std::string c = fmt(s->clear.acc.miou(), "%.6f"), d = fmt(s->degraded.acc.miou(), "%.6f"),
                        gp = fmt(g.miou, "%+.6f");
      md << "| " << in << " | " << name << " | " << s->degraded.images << " | " << c << " | " << d << " | " << gp
         << " |\n";
      csv << in << "," << name << "," << s->degraded.images << "," << c << "," << d << "," << gp << "\n";
    }
  }
  const fs::path dir = resolve_out(out_flag, "runs", "analyze-gap");
  fs::create_directories(dir);
  write_text(dir / "gap_summary.md", md.str());
  write_text(dir / "gap_summary.csv", csv.str());
  out << md.str();
  write_sidecar(dir / "run_info.json", "analyze-gap", args, started, "");
  return kOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Weather-guided semantic segmentation experiments", "weatherseg"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all");

  Common common;
  std::string dataset, checkpoint, resume;
  std::vector<std::string> inputs;
  auto add_common = [&](CLI::App* sub, bool need_config) {
    auto* o = sub->add_option("--config,-c", common.config_path, "experiment config (YAML)");
    if (need_config) o->required()->check(CLI::ExistingFile);
    sub->add_option("--out,-o", common.out, "output directory");
    sub->add_option("--set", common.sets, "override a config key: dotted.key=value");
    sub->allow_extras();
  };
  auto* gen = app.add_subcommand("gen-data", "generate a paired clear/degraded dataset");
  add_common(gen, true);
  auto* trn = app.add_subcommand("train", "train a network on a generated dataset");
  add_common(trn, true);
  trn->add_option("--dataset,-d", dataset, "dataset directory")->required();
  trn->add_option("--resume", resume, "checkpoint to resume from");
  auto* evl = app.add_subcommand("eval", "evaluate a checkpoint (overall, paired gap, strata)");
  add_common(evl, false);
  evl->add_option("--checkpoint", checkpoint, "checkpoint file")->required()->check(CLI::ExistingFile);
  evl->add_option("--dataset,-d", dataset, "dataset directory")->required();
  auto* abl = app.add_subcommand("ablate", "train and evaluate every ablation variant");
  add_common(abl, true);
  abl->add_option("--dataset,-d", dataset, "dataset directory")->required();
  auto* gap = app.add_subcommand("analyze-gap", "summarize clear-vs-degraded gaps of eval reports");
  gap->add_option("inputs", inputs, "eval_report.json files or eval output directories")->required();
  gap->add_option("--out,-o", common.out, "output directory");

  try {
    std::vector<std::string> rev(args.rbegin(), args.rend());
    app.parse(rev);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return kOk;
  } catch (const CLI::CallForAllHelp& e) {
    out << app.help("", CLI::AppFormatMode::All);
    return kOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n";
    return kConfigError;
  }

  try {
    if (gen->parsed()) return cmd_gen_data(common, gen->remaining(), out);
    if (trn->parsed()) return cmd_train(common, dataset, resume, trn->remaining(), args, out);
    if (evl->parsed()) return cmd_eval(common, checkpoint, dataset, evl->remaining(), args, out);
    if (abl->parsed()) return cmd_ablate(common, dataset, abl->remaining(), args, out);
    if (gap->parsed()) return cmd_analyze_gap(inputs, common.out, args, out);
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << "\n";
    return kConfigError;
  } catch (const DataError& e) {
    err << "data error: " << e.what() << "\n";
    return kDataError;
  } catch (const NumericError& e) {
    err << "numeric error: " << e.what() << "\n";
    return kRuntimeError;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kRuntimeError;
  }
  return kRuntimeError;
}

}  // namespace weatherseg::cli
