// Acceptance gate. Usage: weatherseg_acceptance [criterion ...]
// Prints one "CRITERION <n> PASS|FAIL" line per criterion and exits nonzero
// when any requested criterion fails.
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "cli.hpp"
#include "weatherseg/dataset_io.hpp"
#include "weatherseg/embedder.hpp"
#include "weatherseg/evalkit.hpp"
#include "weatherseg/experiment.hpp"
#include "weatherseg/guidance.hpp"
#include "weatherseg/layers.hpp"
#include "weatherseg/optim.hpp"
#include "weatherseg/rng.hpp"
#include "weatherseg/scenegen.hpp"
#include "weatherseg/segnet.hpp"
#include "weatherseg/trainer.hpp"
#include "weatherseg/weathersim.hpp"

namespace ws = weatherseg;
namespace fs = std::filesystem;
using ws::Image;
using ws::LabelMap;
using ws::Raster;
using ws::Rng;

namespace {

const fs::path kSource = WEATHERSEG_SOURCE_DIR;
const fs::path kDeskConfig = kSource / "configs" / "desk.yaml";

struct Outcome {
  bool pass = true;
  std::string detail;
};

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("weatherseg_acceptance_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

Image random_image(Rng& rng, int h, int w) {
  Image im(h, w);
  for (double& v : im.data()) v = rng.uniform();
  return im;
}

// ---------------------------------------------------------------- 1
Outcome renderer_properties() {
  const auto t0 = std::chrono::steady_clock::now();
  Rng rng(101);
  int failures = 0;
  double worst_fog_rel = 0.0;
  auto check = [&](bool ok) { failures += ok ? 0 : 1; };
  for (int i = 0; i < 1000; ++i) {
    for (int kind = 0; kind < 2; ++kind) {
      const int h = rng.uniform_int(2, 9), w = rng.uniform_int(2, 9);
      const Image J = random_image(rng, h, w);
      ws::weather::ParticleLayer layer{Raster(h, w), random_image(rng, h, w)};
      for (double& m : layer.mask.data()) m = rng.uniform();
      auto apply = [&](const ws::weather::ParticleLayer& l) {
        return kind == 0 ? ws::weather::apply_rain(J, l) : ws::weather::apply_snow(J, l);
      };
      const Image out = apply(layer);
      for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
          for (int c = 0; c < 3; ++c) {
            const double j = J.at(y, x, c), a = layer.appearance.at(y, x, c), m = layer.mask.at(y, x);
            const double o = out.at(y, x, c);
            check(o >= std::min(j, a) - 1e-15 && o <= std::max(j, a) + 1e-15);
            check(std::abs(o - (j * (1 - m) + a * m)) <= 1e-15);
          }
      ws::weather::ParticleLayer zero = layer, one = layer;
      for (double& m : zero.mask.data()) m = 0.0;
      for (double& m : one.mask.data()) m = 1.0;
      check(apply(zero) == J);
      check(apply(one) == layer.appearance);
    }
    // Fog.
    const int h = rng.uniform_int(2, 9), w = rng.uniform_int(2, 9);
    const Image J = random_image(rng, h, w);
    ws::weather::FogParams fog;
    fog.beta = rng.uniform(0.05, 4.0);
    for (double& a : fog.airlight) a = rng.uniform();
    fog.depth = Raster(h, w);
    for (double& d : fog.depth.data()) d = rng.uniform(0.0, 3.0);
    const Image out = ws::weather::apply_fog(J, fog);
    ws::weather::FogParams denser = fog;
    denser.beta *= rng.uniform(1.05, 3.0);
    const Image out2 = ws::weather::apply_fog(J, denser);
    ws::weather::FogParams none = fog;
    for (double& d : none.depth.data()) d = 0.0;
    check(ws::weather::apply_fog(J, none) == J);
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x)
        for (int c = 0; c < 3; ++c) {
          const long double t = std::exp(-static_cast<long double>(fog.beta) * fog.depth.at(y, x));
          const long double ref = J.at(y, x, c) * t + fog.airlight[c] * (1.0L - t);
          const double o = out.at(y, x, c);
          const double rel = static_cast<double>(std::abs(o - ref) / std::max(std::abs(ref), 1e-300L));
          worst_fog_rel = std::max(worst_fog_rel, rel);
          const double L = fog.airlight[c], j = J.at(y, x, c);
          check(o >= std::min(j, L) - 1e-15 && o <= std::max(j, L) + 1e-15);
          check(std::abs(out2.at(y, x, c) - L) <= std::abs(o - L) + 1e-15);
        }
  }
  const double secs = seconds_since(t0);
  Outcome r;
  r.pass = failures == 0 && worst_fog_rel <= 1e-12 && secs < 60;
  std::ostringstream os;
  os << "3x1000 cases, " << failures << " property violations, fog max rel err " << worst_fog_rel << ", "
     << secs << " s";
  r.detail = os.str();
  return r;
}

// ---------------------------------------------------------------- 2
Outcome metric_oracle() {
  const auto t0 = std::chrono::steady_clock::now();
  Rng rng(202);
  int mismatches = 0;
  for (int inst = 0; inst < 100; ++inst) {
    const int C = rng.uniform_int(1, 4);
    const int n_img = rng.uniform_int(1, 5);
    std::vector<LabelMap> preds, gts;
    for (int i = 0; i < n_img; ++i) {
      const int h = rng.uniform_int(1, 8), w = rng.uniform_int(1, 8);
      LabelMap p(h, w), g(h, w);
      for (auto& v : p.data()) v = static_cast<std::uint8_t>(rng.below(C));
      for (auto& v : g.data()) v = static_cast<std::uint8_t>(rng.below(C));
      preds.push_back(p);
      gts.push_back(g);
    }
    ws::eval::ConfusionAccumulator acc(C);
    for (int i = 0; i < n_img; ++i) acc.update(preds[i], gts[i]);
    double sum = 0.0;
    int present = 0;
    for (int c = 0; c < C; ++c) {
      std::uint64_t inter = 0, uni = 0;
      for (int i = 0; i < n_img; ++i)
        for (std::size_t k = 0; k < preds[i].size(); ++k) {
          const bool a = preds[i].data()[k] == c, b = gts[i].data()[k] == c;
          inter += a && b;
          uni += a || b;
        }
      if (inter != acc.intersection(c) || uni != acc.union_count(c)) ++mismatches;
      if (uni > 0) {
        sum += static_cast<double>(inter) / static_cast<double>(uni);
        ++present;
      }
    }
    if (std::abs(acc.miou() - sum / present) > 1e-12) ++mismatches;
  }
  ws::eval::ConfusionAccumulator two(2);
  two.update(LabelMap(1, 4, {0, 1, 1, 1}), LabelMap(1, 4, {0, 0, 1, 1}));
  two.update(LabelMap(1, 2, {0, 1}), LabelMap(1, 2, {0, 1}));
  const double worked = two.miou();
  const double secs = seconds_since(t0);
  Outcome r;
  r.pass = mismatches == 0 && std::abs(worked - 17.0 / 24.0) <= 1e-15 && secs < 60;
  std::ostringstream os;
  os.precision(17);
  os << "100 instances, " << mismatches << " mismatches; worked example mIoU " << worked << " (17/24 = "
     << 17.0 / 24.0 << ")";
  r.detail = os.str();
  return r;
}

// ---------------------------------------------------------------- 3
Outcome gradient_integrity() {
  const auto t0 = std::chrono::steady_clock::now();
  using M = ws::nn::Mat<double>;
  Rng rng(303);
  auto random_mat = [&](int r, int c, double s = 1.0) {
    M m(r, c);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = rng.normal() * s;
    return m;
  };
  auto perturb = [&](ws::nn::Linear<double>& l) {
    l.weight.value = random_mat(static_cast<int>(l.weight.value.rows()), static_cast<int>(l.weight.value.cols()), 0.3);
    l.bias.value = random_mat(1, static_cast<int>(l.bias.value.cols()), 0.1);
  };

  // Guidance MLP + softmax.
  const int D = 8, N = 5;
  ws::guide::GuidanceHead<double> head(ws::guide::Mode::kBlended, random_mat(N, D));
  head.init(rng);
  const M emb = random_mat(1, D);
  const M wv = random_mat(1, N);
  ws::nn::ParamList<double> hp;
  head.collect(hp);
  auto res_mlp = ws::train::grad_check(
      [&] { return (head.weights(emb, nullptr).array() * wv.array()).sum(); },
      [&] {
        ws::nn::zero_grads(hp);
        typename ws::guide::GuidanceHead<double>::Cache c;
        head.weights(emb, &c);
        head.backward_weights(wv, c);
      },
      hp, 1e-5, 1e-7, 1000);

  // Attention injection, including the guidance parameters feeding it.
  ws::nn::Attention<double> attn("inject", "inject", 6, 2 * D, 2, 3, false);
  attn.init(rng);
  perturb(attn.wo);
  ws::nn::Feature<double> latent(6, 3, 4);
  latent.data = random_mat(6, 12);
  const M rw = random_mat(6, 12);
  ws::guide::GuidanceInput<double> gin{emb, M()};
  ws::nn::ParamList<double> ap;
  attn.collect(ap);
  head.collect(ap);
  auto res_attn = ws::train::grad_check(
      [&] {
        const M ctx = head.forward(gin, nullptr);
        return (attn.forward(latent, &ctx, nullptr).data.array() * rw.array()).sum();
      },
      [&] {
        ws::nn::zero_grads(ap);
        typename ws::guide::GuidanceHead<double>::Cache gc;
        const M ctx = head.forward(gin, &gc);
        typename ws::nn::Attention<double>::Cache c;
        attn.forward(latent, &ctx, &c);
        ws::nn::Feature<double> g(6, 3, 4);
        g.data = rw;
        M dctx;
        attn.backward(g, c, &dctx);
        head.backward(dctx, gc);
      },
      ap, 1e-5, 1e-7, 1000);

  // Full loss path on an 8x8 image, 2 classes, D = 8.
  ws::seg::NetworkConfig nc;
  nc.channels = {4, 6};
  nc.inject_after = {1};
  nc.heads = 2;
  nc.head_dim = 3;
  nc.decoder_channels = 4;
  nc.classes = 2;
  nc.aux_stage = 2;
  nc.guidance = ws::guide::Mode::kBlended;
  ws::seg::SegNet<double> net(nc, random_mat(N, D), 17);
  for (auto& a : net.injections())
    if (a) perturb(a->wo);
  Image img = random_image(rng, 8, 8);
  const auto input = ws::seg::image_to_feature<double>(img);
  LabelMap labels(8, 8);
  for (auto& v : labels.data()) v = static_cast<std::uint8_t>(rng.below(2));
  auto params = net.params();
  auto res_full = ws::train::grad_check(
      [&] { return ws::train::seg_loss(net.forward(input, &gin, nullptr), labels, 0.4).total; },
      [&] {
        ws::nn::zero_grads(params);
        typename ws::seg::SegNet<double>::Cache c;
        const auto logits = net.forward(input, &gin, &c);
        ws::nn::Feature<double> gm, ga;
        ws::train::seg_loss(logits, labels, 0.4, &gm, &ga);
        net.backward(gm, ga, c);
      },
      params, 1e-5, 1e-7, 60);

  const double secs = seconds_since(t0);
  Outcome r;
  r.pass = res_mlp.max_rel_error < 1e-4 && res_attn.max_rel_error < 1e-4 && res_full.max_rel_error < 1e-3 &&
           secs < 300;
  std::ostringstream os;
  os << "mlp+softmax " << res_mlp.max_rel_error << ", injection " << res_attn.max_rel_error << ", full loss "
     << res_full.max_rel_error << " [";
  for (const auto& [g, e] : res_full.groups) os << g << "=" << e << " ";
  os << "], " << secs << " s";
  r.detail = os.str();
  return r;
}

// ---------------------------------------------------------------- 4
Outcome identity_at_init() {
  const auto cfg = ws::exp::load_experiment(kDeskConfig);
  const auto rt = ws::exp::make_runtime(cfg);
  auto guided = ws::exp::build_network<float>(cfg, rt);
  auto base_cfg = ws::exp::variant_config(cfg, "baseline");
  auto baseline = ws::exp::build_network<float>(base_cfg, rt);
  Rng rng(404);
  int equal = 0;
  for (int i = 0; i < 10; ++i) {
    const Image img = random_image(rng, 64, 64);
    const auto x = ws::seg::image_to_feature<float>(img);
    const auto g = ws::exp::guidance_input<float>(img, rt);
    const auto a = guided->forward(x, &g, nullptr);
    const auto b = baseline->forward(x, nullptr, nullptr);
    equal += a.main_up.data == b.main_up.data && a.aux_up.data == b.aux_up.data && a.main.data == b.main.data;
  }
  Outcome r;
  r.pass = equal == 10;
  r.detail = std::to_string(equal) + "/10 images bit-equal (guided has " +
             std::to_string(guided->injection_param_count()) + " extra parameters)";
  return r;
}

// ---------------------------------------------------------------- 5
Outcome composition_recovery() {
  const auto t0 = std::chrono::steady_clock::now();
  ws::embed::MockBackend backend(512);
  const auto texts = ws::embed::default_concepts();
  const auto bank = ws::embed::build_concept_bank(texts, backend);
  const auto cats = ws::exp::concept_categories(texts);

  ws::scene::SceneConfig sc;
  ws::scene::WeatherConfig wc = ws::scene::default_weather_config();
  using ws::weather::Effect;
  wc.effect_sets = {{{Effect::kRain}, 1.0}, {{Effect::kSnow}, 1.0}, {{Effect::kFog}, 1.0}};
  auto make = [&](const std::string& split, int count) {
    std::vector<std::pair<ws::nn::Mat<double>, int>> out;
    for (int i = 0; i < count; ++i) {
      const auto p = ws::scene::generate_pair(ws::scene::sample_seed(505, split, i), sc, wc);
      const auto& v = p.degraded.front();
      const int cat = static_cast<int>(v.recipe.effects.front() == Effect::kRain   ? ws::embed::Category::kRain
                                       : v.recipe.effects.front() == Effect::kSnow ? ws::embed::Category::kSnow
                                                                                  : ws::embed::Category::kFog);
      out.emplace_back(backend.embed_image(v.image).transpose(), cat);
    }
    return out;
  };
  const auto train = make("train", 1500);
  const auto test = make("test", 500);

  ws::guide::GuidanceHead<double> head(ws::guide::Mode::kBlended, bank.embeddings);
  Rng init(ws::derive_seed(505, "guidance"));
  head.init(init);
  ws::nn::ParamList<double> params;
  head.collect(params);
  ws::train::OptimizerConfig oc;
  oc.weight_decay = 0.0;
  ws::train::Optimizer<double> opt(params, oc);
  std::vector<std::size_t> order(train.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  Rng shuffle(506);
  const int batch = 32;
  for (int epoch = 0; epoch < 30; ++epoch) {
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[shuffle.below(i)]);
    for (std::size_t b = 0; b < order.size(); b += batch) {
      ws::nn::zero_grads(params);
      const std::size_t e = std::min(order.size(), b + batch);
      for (std::size_t k = b; k < e; ++k)
        ws::exp::composition_loss(head, train[order[k]].first, train[order[k]].second, cats, true);
      for (auto* p : params) p->grad /= static_cast<double>(e - b);
      opt.step(3e-3);
    }
  }
  int hits = 0;
  for (const auto& [emb, cat] : test) hits += ws::exp::predicted_category(head, emb, cats) == cat;
  const double acc = static_cast<double>(hits) / static_cast<double>(test.size());
  const double secs = seconds_since(t0);
  Outcome r;
  r.pass = acc >= 0.9 && secs < 300;
  std::ostringstream os;
  os << "argmax-category accuracy " << acc << " on " << test.size() << " held-out single-effect images, " << secs
     << " s";
  r.detail = os.str();
  return r;
}

// ---------------------------------------------------------------- 6
struct SeedResult {
  double degraded = 0, clear = 0, multi_gap = 0;
};

Outcome directional_claim() {
  const auto t0 = std::chrono::steady_clock::now();
  const auto cfg = ws::exp::load_experiment(kDeskConfig);
  const ws::scene::Dataset ds = ws::scene::generate_dataset(cfg.data);
  const auto& counts = ds.manifest.splits.at("test").effect_set_counts;
  const bool mix_ok = ds.train.size() * cfg.data.weather.variants_per_scene >= 2000 &&
                      ds.test.size() * cfg.data.weather.variants_per_scene >= 400 &&
                      counts.count("rain+fog") && counts.count("snow+fog") && cfg.data.scene.height == 64 &&
                      cfg.data.scene.width == 64 && cfg.data.scene.num_classes() == 6;

  auto run = [&](const std::string& variant, std::uint64_t seed) {
    auto vc = ws::exp::variant_config(cfg, variant);
    vc.training.seed = seed;
    const auto rt = ws::exp::make_runtime(vc);
    auto net = ws::exp::build_network<float>(vc, rt);
    const auto data = ws::exp::make_training_data<float>(vc, ds.train, rt);
    ws::train::FitOptions opt;
    opt.write_files = false;
    ws::train::fit(*net, vc.training, data.train, data.val, opt);
    const auto rep = ws::exp::evaluate(vc, *net, rt, ds.test, ds.manifest.class_names);
    SeedResult s;
    s.degraded = rep.find("all")->degraded.acc.miou();
    s.clear = rep.find("all")->clear.acc.miou();
    s.multi_gap = rep.find("multi")->gap.miou;
    std::printf("  [6] %-8s seed %llu: degraded %.4f clear %.4f multi-gap %.4f (%.0f s elapsed)\n",
                variant.c_str(), static_cast<unsigned long long>(seed), s.degraded, s.clear, s.multi_gap,
                seconds_since(t0));
    std::fflush(stdout);
    return s;
  };

  std::map<std::string, std::vector<SeedResult>> results;
  auto run_seeds = [&](int n) {
    for (int s = static_cast<int>(results["baseline"].size()) + 1; s <= n; ++s) {
      results["baseline"].push_back(run("baseline", static_cast<std::uint64_t>(s)));
      results["guided"].push_back(run("guided", static_cast<std::uint64_t>(s)));
    }
  };
  auto mean = [&](const std::string& v, double SeedResult::*f) {
    double m = 0;
    for (const auto& r : results[v]) m += r.*f;
    return m / static_cast<double>(results[v].size());
  };
  run_seeds(3);
  bool a = mean("guided", &SeedResult::degraded) >= mean("baseline", &SeedResult::degraded) + 0.005;
  bool reran = false;
  if (!a) {
    reran = true;
    run_seeds(5);
    a = mean("guided", &SeedResult::degraded) >= mean("baseline", &SeedResult::degraded) + 0.005;
  }
  const bool b = mean("guided", &SeedResult::multi_gap) < mean("baseline", &SeedResult::multi_gap);
  const bool c = mean("guided", &SeedResult::clear) >= mean("baseline", &SeedResult::clear) - 0.005;
  const double secs = seconds_since(t0);
  Outcome r;
  r.pass = mix_ok && a && b && c && secs <= 1800;
  std::ostringstream os;
  os.precision(4);
  os << std::fixed << results["baseline"].size() << " seeds" << (reran ? " (rerun)" : "")
     << "; degraded mIoU baseline " << mean("baseline", &SeedResult::degraded) << " guided "
     << mean("guided", &SeedResult::degraded) << " (a " << (a ? "ok" : "FAIL") << "); multi gap baseline "
     << mean("baseline", &SeedResult::multi_gap) << " guided " << mean("guided", &SeedResult::multi_gap) << " (b "
     << (b ? "ok" : "FAIL") << "); clear baseline " << mean("baseline", &SeedResult::clear) << " guided "
     << mean("guided", &SeedResult::clear) << " (c " << (c ? "ok" : "FAIL") << "); benchmark "
     << (mix_ok ? "ok" : "FAIL") << "; " << std::setprecision(0) << secs << " s";
  r.detail = os.str();
  return r;
}

int cli(const std::vector<std::string>& args, std::string* output = nullptr) {
  std::ostringstream out, err;
  const int code = ws::cli::run(args, out, err);
  if (output) *output = out.str();
  if (code != 0) std::cerr << err.str();
  return code;
}

// ---------------------------------------------------------------- 7
Outcome ablation_harness() {
  const auto t0 = std::chrono::steady_clock::now();
  const fs::path dir = scratch("ablate");
  Outcome r;
  if (cli({"gen-data", "-c", kDeskConfig.string(), "-o", (dir / "data").string()}) != 0) {
    r.pass = false;
    r.detail = "gen-data failed";
    return r;
  }
  std::string table;
  const int code = cli({"ablate", "-c", kDeskConfig.string(), "-d", (dir / "data").string(), "-o",
                        (dir / "out").string(), "--training.epochs=3"},
                       &table);
  if (code != 0) {
    r.pass = false;
    r.detail = "ablate exited with " + std::to_string(code);
    return r;
  }
  std::ifstream is(dir / "out" / "ablation.json");
  const auto j = ws::config::Json::parse(is);
  const auto& rows = j.at("rows");
  std::map<std::string, ws::config::Json> by;
  for (const auto& row : rows) by[row.at("variant").get<std::string>()] = row;
  bool classes_same = true;
  for (const auto& row : rows) classes_same &= row.at("class_names") == rows.front().at("class_names");
  const double ratio = by.count("extra_params") && by.count("guided")
                           ? by["extra_params"]["param_count"].get<double>() / by["guided"]["param_count"].get<double>()
                           : 0.0;
  const auto shape = by.count("multiclip") ? by["multiclip"]["guidance_shape"] : ws::config::Json();
  const int D = 64;
  const bool shape_ok = shape == ws::config::Json::array({20, 2 * D});
  // The same construction at the full embedding width.
  ws::embed::MockBackend wide(512);
  const auto bank = ws::embed::build_concept_bank(ws::embed::default_concepts(), wide);
  const Eigen::MatrixXd ci = wide.embed_image(Image(16, 16, 0.5)).transpose();
  const auto mc = ws::guide::build_guidance_multiclip<double>(bank.embeddings, ci);
  const bool wide_ok = mc.rows() == 20 && mc.cols() == 1024;
  const std::size_t table_rows =
      static_cast<std::size_t>(std::count(table.begin(), table.end(), '\n')) - 2;  // minus header lines
  r.pass = rows.size() == 6 && by.size() == 6 && classes_same && ratio >= 0.95 && ratio <= 1.05 && shape_ok &&
           wide_ok && table_rows >= 6;
  std::ostringstream os;
  os << rows.size() << " variants, identical class sets " << (classes_same ? "yes" : "no")
     << ", extra-params/guided params " << ratio << ", multiclip guidance " << shape.dump() << " (D=512: "
     << mc.rows() << "x" << mc.cols() << "), " << seconds_since(t0) << " s";
  r.detail = os.str();
  std::cout << table;
  return r;
}

// ---------------------------------------------------------------- 8
bool same_tree(const fs::path& a, const fs::path& b, std::string* why) {
  std::vector<fs::path> fa, fb;
  for (const auto& e : fs::recursive_directory_iterator(a))
    if (e.is_regular_file()) fa.push_back(fs::relative(e.path(), a));
  for (const auto& e : fs::recursive_directory_iterator(b))
    if (e.is_regular_file()) fb.push_back(fs::relative(e.path(), b));
  std::sort(fa.begin(), fa.end());
  std::sort(fb.begin(), fb.end());
  if (fa != fb) {
    *why = "file lists differ";
    return false;
  }
  for (const auto& f : fa) {
    std::ifstream x(a / f, std::ios::binary), y(b / f, std::ios::binary);
    const std::string sx((std::istreambuf_iterator<char>(x)), {}), sy((std::istreambuf_iterator<char>(y)), {});
    if (sx != sy) {
      *why = f.string() + " differs";
      return false;
    }
  }
  *why = std::to_string(fa.size()) + " files identical";
  return true;
}

Outcome determinism() {
  const fs::path dir = scratch("determinism");
  const std::vector<std::string> small = {"--dataset.train_scenes=120", "--dataset.test_scenes=40"};
  double miou[2] = {0, 0};
  Outcome r;
  for (int run = 0; run < 2; ++run) {
    const std::string tag = std::to_string(run);
    std::vector<std::string> gen = {"gen-data", "-c", kDeskConfig.string(), "-o", (dir / ("data" + tag)).string()};
    gen.insert(gen.end(), small.begin(), small.end());
    std::vector<std::string> tr = {"train", "-c", kDeskConfig.string(), "-d", (dir / ("data" + tag)).string(), "-o",
                                   (dir / ("train" + tag)).string(), "--training.max_steps=60"};
    tr.insert(tr.end(), small.begin(), small.end());
    const std::vector<std::string> ev = {"eval", "--checkpoint", (dir / ("train" + tag) / "last.ckpt").string(), "-d",
                                         (dir / ("data" + tag)).string(), "-o", (dir / ("eval" + tag)).string()};
    if (cli(gen) != 0 || cli(tr) != 0 || cli(ev) != 0) {
      r.pass = false;
      r.detail = "pipeline run " + tag + " failed";
      return r;
    }
    std::ifstream is(dir / ("eval" + tag) / "eval_report.json");
    miou[run] = ws::config::Json::parse(is).at("strata").at("all").at("degraded").at("miou").get<double>();
  }
  std::string why;
  const bool data_same = same_tree(dir / "data0", dir / "data1", &why);
  const double rel = std::abs(miou[0] - miou[1]) / std::max(std::abs(miou[0]), 1e-300);
  r.pass = data_same && rel <= 1e-6;
  std::ostringstream os;
  os.precision(10);
  os << "dataset: " << why << "; final mIoU " << miou[0] << " vs " << miou[1] << " (rel diff " << rel << ")";
  r.detail = os.str();
  return r;
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<std::pair<int, std::function<Outcome()>>> all = {
      {1, renderer_properties}, {2, metric_oracle},   {3, gradient_integrity}, {4, identity_at_init},
      {5, composition_recovery}, {6, directional_claim}, {7, ablation_harness}, {8, determinism}};
  std::vector<int> wanted;
  for (int i = 1; i < argc; ++i) wanted.push_back(std::atoi(argv[i]));
  if (wanted.empty())
    for (const auto& [n, f] : all) wanted.push_back(n);
  bool ok = true;
  for (const auto& [n, f] : all) {
    if (std::find(wanted.begin(), wanted.end(), n) == wanted.end()) continue;
    Outcome o;
    try {
      o = f();
    } catch (const std::exception& e) {
      o.pass = false;
      o.detail = std::string("exception: ") + e.what();
    }
    std::printf("CRITERION %d %s: %s\n", n, o.pass ? "PASS" : "FAIL", o.detail.c_str());
    std::fflush(stdout);
    ok &= o.pass;
  }
  return ok ? 0 : 1;
}
