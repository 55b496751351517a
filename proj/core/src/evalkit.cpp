#include "weatherseg/evalkit.hpp"

#include <algorithm>
#include <cstdio>
#include <map>
#include <set>
#include <sstream>

#include "weatherseg/error.hpp"

namespace weatherseg::eval {

using scene::PairedSample;
using scene::VariantRef;

ConfusionAccumulator::ConfusionAccumulator(int classes)
    : classes_(classes), conf_(static_cast<std::size_t>(classes) * classes, 0) {
  if (classes < 1) throw InvalidInput("ConfusionAccumulator: need at least one class");
}

void ConfusionAccumulator::update(const LabelMap& pred, const LabelMap& gt) {
  if (pred.height() != gt.height() || pred.width() != gt.width())
    throw InvalidInput("update: prediction " + std::to_string(pred.height()) + "x" +
                       std::to_string(pred.width()) + " vs ground truth " +
                       std::to_string(gt.height()) + "x" + std::to_string(gt.width()));
  const auto p = pred.data();
  const auto g = gt.data();
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (p[i] >= classes_ || g[i] >= classes_)
      throw InvalidInput("update: class id " + std::to_string(std::max(p[i], g[i])) +
                         " >= class count " + std::to_string(classes_));
  }
  for (std::size_t i = 0; i < p.size(); ++i) ++conf_[g[i] * classes_ + p[i]];
}

std::uint64_t ConfusionAccumulator::union_count(int c) const {
  std::uint64_t row = 0, col = 0;
  for (int k = 0; k < classes_; ++k) {
    row += count(c, k);
    col += count(k, c);
  }
  return row + col - count(c, c);
}

std::uint64_t ConfusionAccumulator::pixels() const {
  std::uint64_t n = 0;
  for (std::uint64_t v : conf_) n += v;
  return n;
}

std::vector<std::optional<double>> ConfusionAccumulator::iou_per_class() const {
  std::vector<std::optional<double>> out(classes_);
  for (int c = 0; c < classes_; ++c) {
    const std::uint64_t u = union_count(c);
    if (u > 0) out[c] = static_cast<double>(intersection(c)) / static_cast<double>(u);
  }
  return out;
}

double ConfusionAccumulator::miou() const {
  double sum = 0.0;
  int n = 0;
  for (const auto& v : iou_per_class()) {
    if (v) {
      sum += *v;
      ++n;
    }
  }
  if (n == 0) throw UndefinedResult("mIoU undefined: no class has a nonempty union");
  return sum / n;
}

ConfusionAccumulator& ConfusionAccumulator::merge(const ConfusionAccumulator& other) {
  if (other.classes_ != classes_)
    throw InvalidInput("merge: class counts differ (" + std::to_string(classes_) + " vs " +
                       std::to_string(other.classes_) + ")");
  for (std::size_t i = 0; i < conf_.size(); ++i) conf_[i] += other.conf_[i];
  return *this;
}

ConfusionAccumulator ConfusionAccumulator::from_confusion(int classes,
                                                          std::vector<std::uint64_t> counts) {
  ConfusionAccumulator a(classes);
  if (counts.size() != a.conf_.size())
    throw InvalidInput("from_confusion: expected " + std::to_string(a.conf_.size()) + " counts");
  a.conf_ = std::move(counts);
  return a;
}

ConfusionAccumulator merge(const ConfusionAccumulator& a, const ConfusionAccumulator& b) {
  ConfusionAccumulator out = a;
  out.merge(b);
  return out;
}

Gap paired_gap(const Report& clear, const Report& degraded) {
  if (clear.acc.classes() != degraded.acc.classes())
    throw InvalidInput("paired_gap: class sets differ");
  if (clear.sample_ids != degraded.sample_ids)
    throw InvalidInput("paired_gap: clear and degraded reports cover different samples");
  Gap g;
  const auto a = clear.acc.iou_per_class();
  const auto b = degraded.acc.iou_per_class();
  g.per_class.resize(a.size());
  for (std::size_t c = 0; c < a.size(); ++c)
    if (a[c] && b[c]) g.per_class[c] = *a[c] - *b[c];
  g.miou = clear.acc.miou() - degraded.acc.miou();
  return g;
}

const Stratum* EvalReport::find(const std::string& name) const {
  for (const Stratum& s : strata)
    if (s.name == name) return &s;
  return nullptr;
}

EvalReport stratified_eval(const Predictor& predict, const std::vector<scene::PairedSample>& samples,
                           const std::vector<std::string>& class_names) {
  const int C = static_cast<int>(class_names.size());
  const scene::Strata strata = scene::stratify(scene::summarize_split(samples));

  std::map<std::string, ConfusionAccumulator> clear_acc;
  std::map<VariantRef, ConfusionAccumulator> variant_acc;
  for (const PairedSample& s : samples) {
    ConfusionAccumulator a(C);
    a.update(predict(s.clear), s.labels);
    clear_acc.emplace(s.id, std::move(a));
    for (int k = 0; k < static_cast<int>(s.degraded.size()); ++k) {
      ConfusionAccumulator d(C);
      d.update(predict(s.degraded[k].image), s.labels);
      variant_acc.emplace(VariantRef{s.id, k}, std::move(d));
    }
  }

  auto build = [&](const std::string& name, const std::vector<VariantRef>& refs) {
    Stratum st;
    st.name = name;
    st.clear.acc = ConfusionAccumulator(C);
    st.degraded.acc = ConfusionAccumulator(C);
    std::set<std::string> ids;
    for (const VariantRef& r : refs) {
      st.degraded.acc.merge(variant_acc.at(r));
      ++st.degraded.images;
      ids.insert(r.sample_id);
    }
    for (const std::string& id : ids) {
      st.clear.acc.merge(clear_acc.at(id));
      ++st.clear.images;
    }
    st.clear.sample_ids.assign(ids.begin(), ids.end());
    st.degraded.sample_ids = st.clear.sample_ids;
    st.gap = paired_gap(st.clear, st.degraded);
    return st;
  };

  EvalReport r;
  r.class_names = class_names;
  std::vector<VariantRef> all = strata.single;
  all.insert(all.end(), strata.multi.begin(), strata.multi.end());
  std::sort(all.begin(), all.end());
  if (!all.empty()) r.strata.push_back(build("all", all));
  if (!strata.single.empty()) r.strata.push_back(build("single", strata.single));
  if (!strata.multi.empty()) r.strata.push_back(build("multi", strata.multi));
  return r;
}

namespace {

config::Json optional_list(const std::vector<std::optional<double>>& v) {
  config::Json a = config::Json::array();
  for (const auto& x : v) a.push_back(x ? config::Json(*x) : config::Json(nullptr));
  return a;
}

std::vector<std::optional<double>> optional_list_from(const config::Json& a) {
  std::vector<std::optional<double>> out;
  for (const auto& x : a) out.push_back(x.is_null() ? std::nullopt : std::optional(x.get<double>()));
  return out;
}

}  // namespace

config::Json to_json(const Report& r, const std::vector<std::string>& class_names) {
  config::Json per_class = config::Json::object();
  const auto iou = r.acc.iou_per_class();
  for (std::size_t c = 0; c < class_names.size() && c < iou.size(); ++c)
    per_class[class_names[c]] = iou[c] ? config::Json(*iou[c]) : config::Json(nullptr);
  config::Json j = {{"images", r.images},
                    {"pixels", r.acc.pixels()},
                    {"sample_ids", r.sample_ids},
                    {"iou", per_class},
                    {"confusion", r.acc.confusion()}};
  j["miou"] = r.acc.empty() ? config::Json(nullptr) : config::Json(r.acc.miou());
  return j;
}

config::Json to_json(const EvalReport& r) {
  config::Json strata = config::Json::object();
  for (const Stratum& s : r.strata) {
    strata[s.name] = {{"clear", to_json(s.clear, r.class_names)},
                      {"degraded", to_json(s.degraded, r.class_names)},
                      {"gap", {{"miou", s.gap.miou}, {"per_class", optional_list(s.gap.per_class)}}}};
  }
  return {{"schema", "weatherseg-eval-v1"},
          {"split", r.split},
          {"class_names", r.class_names},
          {"config_hash", r.config_hash},
          {"config", r.config},
          {"strata", strata}};
}

Report report_from_json(const config::Json& j, int classes) {
  Report r;
  r.images = j.at("images").get<std::size_t>();
  r.sample_ids = j.at("sample_ids").get<std::vector<std::string>>();
  r.acc = ConfusionAccumulator::from_confusion(classes,
                                               j.at("confusion").get<std::vector<std::uint64_t>>());
  return r;
}

EvalReport eval_report_from_json(const config::Json& j) {
  try {
    if (j.at("schema") != "weatherseg-eval-v1") throw DataError("", "unknown eval report schema");
    EvalReport r;
    r.split = j.at("split").get<std::string>();
    r.class_names = j.at("class_names").get<std::vector<std::string>>();
    r.config_hash = j.at("config_hash").get<std::string>();
    r.config = j.at("config");
    const int C = static_cast<int>(r.class_names.size());
    for (const char* name : {"all", "single", "multi"}) {
      auto it = j.at("strata").find(name);
      if (it == j.at("strata").end()) continue;
      Stratum s;
      s.name = name;
      s.clear = report_from_json(it->at("clear"), C);
      s.degraded = report_from_json(it->at("degraded"), C);
      s.gap.miou = it->at("gap").at("miou").get<double>();
      s.gap.per_class = optional_list_from(it->at("gap").at("per_class"));
      r.strata.push_back(std::move(s));
    }
    return r;
  } catch (const config::Json::exception& e) {
    throw DataError("", std::string("malformed eval report: ") + e.what());
  }
}

std::string to_table(const EvalReport& r) {
  std::ostringstream os;
  char line[160];
  std::snprintf(line, sizeof line, "%-8s %7s %9s %9s %9s\n", "stratum", "images", "clear",
                "degraded", "gap");
  os << line;
  for (const Stratum& s : r.strata) {
    std::snprintf(line, sizeof line, "%-8s %7zu %9.4f %9.4f %+9.4f\n", s.name.c_str(),
                  s.degraded.images, s.clear.acc.miou(), s.degraded.acc.miou(), s.gap.miou);
    os << line;
  }
  if (const Stratum* all = r.find("all")) {
    os << "\nper-class IoU (all)\n";
    const auto c = all->clear.acc.iou_per_class();
    const auto d = all->degraded.acc.iou_per_class();
    for (std::size_t k = 0; k < r.class_names.size(); ++k) {
      auto fmt = [](const std::optional<double>& v) { return v ? *v : -1.0; };
      std::snprintf(line, sizeof line, "%-12s %9.4f %9.4f\n", r.class_names[k].c_str(), fmt(c[k]),
                    fmt(d[k]));
      os << line;
    }
  }
  return os.str();
}

}  // namespace weatherseg::eval
