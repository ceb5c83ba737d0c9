#include "mmtrust/eval.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "json.hpp"
#include "mmtrust/ccls.hpp"
#include "mmtrust/fusion.hpp"

namespace mmtrust::eval {

namespace {

using json = nlohmann::json;

std::string percent(double acc) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.1f", 100.0 * acc);
  return buf;
}

// Quotes a CSV field when it contains separators or quotes.
std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

std::string missing_code(const std::set<Modality>& missing) {
  std::string s;
  for (Modality m : kAllModalities)
    if (missing.contains(m)) s += modality_code(m);
  return s;
}

struct FoldOutcome {
  std::vector<std::size_t> test_index;  // indices into the evaluated dataset
  std::vector<PoseLabel> fused;
  std::map<Modality, std::vector<PoseLabel>> unimodal;
};

FoldOutcome run_fold(const Dataset& ds, const std::vector<std::size_t>& test_idx,
                     const ConfigurationSpec& spec, const std::set<Modality>& missing,
                     classifiers::ClassifierKind kind, std::uint64_t seed, std::size_t fold,
                     std::size_t trust_folds) {
  std::vector<bool> held_out(ds.size(), false);
  for (auto i : test_idx) held_out[i] = true;
  std::vector<std::size_t> train_idx;
  for (std::size_t i = 0; i < ds.size(); ++i)
    if (!held_out[i]) train_idx.push_back(i);
  const Dataset train = ds.subset(train_idx);

  const auto clfs = classifiers::fit_channels(train, kind, mix_seed(seed, 0xF01D, fold));
  const auto table = ccls::fit_trust_table(train, clfs, kind, spec.views, trust_folds,
                                           mix_seed(seed, 0x7F, fold));

  std::set<Modality> available;
  for (Modality m : spec.modalities)
    if (!missing.contains(m)) available.insert(m);

  FoldOutcome out;
  out.test_index = test_idx;
  for (auto i : test_idx) {
    const DataPoint& p = ds[i];
    const auto it = table.find(p.scene);
    if (it == table.end())
      throw UnknownScene("training fold has no points of scene " + p.scene.name());
    const auto scores = classifiers::score_point(clfs, p);
    out.fused.push_back(fusion::fuse(scores, it->second, available).label);
    for (Modality m : spec.modalities)
      out.unimodal[m].push_back(fusion::fuse(scores, it->second, {m}).label);
  }
  return out;
}

ConfigResult evaluate(const Dataset& full, const ConfigurationSpec& spec,
                      const std::set<Modality>& missing, classifiers::ClassifierKind kind,
                      std::size_t n_folds, std::uint64_t seed, std::size_t threads,
                      std::size_t trust_folds) {
  const Dataset ds = full.select(spec.modalities, spec.views);
  const auto folds = stratified_fold_indices(ds.labels(), n_folds, seed);

  std::vector<FoldOutcome> outcomes(folds.size());
  parallel_for(folds.size(), threads, [&](std::size_t f) {
    outcomes[f] = run_fold(ds, folds[f], spec, missing, kind, seed, f, trust_folds);
  });

  ConfigResult r;
  r.spec = spec;
  r.missing = missing;
  for (const auto& o : outcomes) {
    std::size_t correct = 0;
    for (std::size_t j = 0; j < o.test_index.size(); ++j) {
      const DataPoint& p = ds[o.test_index[j]];
      const auto t = index_of(p.label);
      ++r.confusion[p.scene][t][index_of(o.fused[j])];
      correct += o.fused[j] == p.label ? 1 : 0;
      for (const auto& [m, preds] : o.unimodal) ++r.unimodal[m][p.scene][t][index_of(preds[j])];
    }
    r.fold_accuracy.push_back(o.test_index.empty() ? 0.0
                                                   : static_cast<double>(correct) /
                                                         static_cast<double>(o.test_index.size()));
  }
  return r;
}

EvalReport make_report(const Dataset& ds, classifiers::ClassifierKind kind, std::size_t n_folds,
                       std::uint64_t seed) {
  EvalReport r;
  r.seed = seed;
  r.n_folds = n_folds;
  r.classifier = kind;
  r.n_points = ds.size();
  return r;
}

void write_file(const std::filesystem::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << content;
  if (!out) throw IoError("failed writing " + path.string());
}

}  // namespace

ConfigurationSpec ConfigurationSpec::mm() {
  return {"MM", {Modality::Rgb, Modality::Depth, Modality::Pressure},
          {View::Top, View::Side, View::Head}};
}
ConfigurationSpec ConfigurationSpec::mpm() {
  return {"MpM", {Modality::Rgb, Modality::Depth, Modality::Pressure}, {View::Top}};
}
ConfigurationSpec ConfigurationSpec::pmm() {
  return {"PMM", {Modality::Rgb, Modality::Depth}, {View::Top, View::Side, View::Head}};
}
ConfigurationSpec ConfigurationSpec::pmpm() {
  return {"PMpM", {Modality::Rgb, Modality::Depth}, {View::Top, View::Side}};
}

ConfigurationSpec ConfigurationSpec::from_name(std::string_view name) {
  if (name == "MM") return mm();
  if (name == "MpM") return mpm();
  if (name == "PMM") return pmm();
  if (name == "PMpM") return pmpm();
  throw std::invalid_argument("unknown configuration '" + std::string(name) + "'");
}

ConfusionMatrix confusion_matrix(std::span<const PoseLabel> preds,
                                 std::span<const PoseLabel> truth) {
  if (preds.size() != truth.size())
    throw LengthMismatch("predictions and truth differ in length");
  ConfusionMatrix c{};
  for (std::size_t i = 0; i < preds.size(); ++i) ++c[index_of(truth[i])][index_of(preds[i])];
  return c;
}

std::size_t total(const ConfusionMatrix& c) {
  std::size_t n = 0;
  for (const auto& row : c)
    for (auto v : row) n += v;
  return n;
}

double accuracy(const ConfusionMatrix& c) {
  const auto n = total(c);
  if (n == 0) return 0.0;
  std::size_t trace = 0;
  for (std::size_t i = 0; i < kNumLabels; ++i) trace += c[i][i];
  return static_cast<double>(trace) / static_cast<double>(n);
}

ConfusionMatrix& operator+=(ConfusionMatrix& a, const ConfusionMatrix& b) {
  for (std::size_t i = 0; i < kNumLabels; ++i)
    for (std::size_t j = 0; j < kNumLabels; ++j) a[i][j] += b[i][j];
  return a;
}

std::string ConfigResult::tag() const {
  return missing.empty() ? spec.name : spec.name + "-" + missing_code(missing);
}

double ConfigResult::scene_accuracy(const SceneCondition& s) const {
  const auto it = confusion.find(s);
  return it == confusion.end() ? 0.0 : accuracy(it->second);
}

double ConfigResult::unimodal_accuracy(Modality m, const SceneCondition& s) const {
  const auto it = unimodal.find(m);
  if (it == unimodal.end()) return 0.0;
  const auto jt = it->second.find(s);
  return jt == it->second.end() ? 0.0 : accuracy(jt->second);
}

double ConfigResult::overall_accuracy() const {
  ConfusionMatrix all{};
  for (const auto& [s, c] : confusion) all += c;
  return accuracy(all);
}

std::vector<SceneCondition> EvalReport::scenes() const {
  std::set<SceneCondition> s;
  for (const auto& c : configs)
    for (const auto& [scene, m] : c.confusion) s.insert(scene);
  return {s.begin(), s.end()};
}

const ConfigResult& EvalReport::config(std::string_view tag) const {
  for (const auto& c : configs)
    if (c.tag() == tag) return c;
  throw std::out_of_range("no configuration '" + std::string(tag) + "' in report");
}

EvalReport run_cv(const Dataset& ds, const ConfigurationSpec& spec,
                  classifiers::ClassifierKind kind, std::size_t n_folds, std::uint64_t seed,
                  std::size_t threads, std::size_t trust_folds) {
  return run_missing_modality(ds, spec, kind, {}, n_folds, seed, threads, trust_folds);
}

EvalReport run_missing_modality(const Dataset& ds, const ConfigurationSpec& spec,
                                classifiers::ClassifierKind kind, const std::set<Modality>& missing,
                                std::size_t n_folds, std::uint64_t seed, std::size_t threads,
                                std::size_t trust_folds) {
  std::size_t survivors = 0;
  for (Modality m : spec.modalities) survivors += missing.contains(m) ? 0 : 1;
  for (Modality m : missing)
    if (std::find(spec.modalities.begin(), spec.modalities.end(), m) == spec.modalities.end())
      throw std::invalid_argument("missing modality " + std::string(modality_code(m)) +
                                  " is not part of " + spec.name);
  if (survivors == 0) throw std::invalid_argument("every modality of " + spec.name + " is missing");

  EvalReport r = make_report(ds, kind, n_folds, seed);
  r.configs.push_back(evaluate(ds, spec, missing, kind, n_folds, seed, threads, trust_folds));
  r.trust_folds = trust_folds;
  return r;
}

EvalReport merge(EvalReport a, const EvalReport& b) {
  if (a.configs.empty()) return b;
  if (b.configs.empty()) return a;
  if (a.seed != b.seed || a.n_folds != b.n_folds || a.classifier != b.classifier ||
      a.n_points != b.n_points || a.trust_folds != b.trust_folds)
    throw std::invalid_argument("reports come from different evaluation settings");
  a.configs.insert(a.configs.end(), b.configs.begin(), b.configs.end());
  return a;
}

std::string accuracy_csv(const EvalReport& r) {
  std::ostringstream out;
  out << "scene";
  for (const auto& c : r.configs) out << ',' << csv_field(c.tag());
  out << '\n';
  for (const auto& s : r.scenes()) {
    out << s.name();
    for (const auto& c : r.configs) out << ',' << percent(c.scene_accuracy(s));
    out << '\n';
  }
  return out.str();
}

std::string unimodal_csv(const EvalReport& r) {
  std::ostringstream out;
  out << "scene";
  for (const auto& c : r.configs)
    for (const auto& [m, per_scene] : c.unimodal)
      out << ',' << csv_field(c.tag() + ":" + std::string(modality_code(m)));
  out << '\n';
  for (const auto& s : r.scenes()) {
    out << s.name();
    for (const auto& c : r.configs)
      for (const auto& [m, per_scene] : c.unimodal) out << ',' << percent(c.unimodal_accuracy(m, s));
    out << '\n';
  }
  return out.str();
}

std::string confusion_csv(const EvalReport& r, const SceneCondition& scene) {
  std::ostringstream out;
  out << "configuration,truth";
  for (auto l : all_labels()) out << ',' << label_name(l);
  out << '\n';
  for (const auto& c : r.configs) {
    const auto it = c.confusion.find(scene);
    const ConfusionMatrix m = it == c.confusion.end() ? ConfusionMatrix{} : it->second;
    for (std::size_t i = 0; i < kNumLabels; ++i) {
      out << csv_field(c.tag()) << ',' << label_name(label_from_index(i));
      for (std::size_t j = 0; j < kNumLabels; ++j) out << ',' << m[i][j];
      out << '\n';
    }
  }
  return out.str();
}

std::string heatmap_svg(const EvalReport& r) {
  const auto scenes = r.scenes();
  const int cell_w = 64, cell_h = 24, left = 150, top = 40;
  const int width = left + cell_w * static_cast<int>(r.configs.size()) + 10;
  const int height = top + cell_h * static_cast<int>(scenes.size()) + 10;
  std::ostringstream out;
  out << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n"
      << "<svg xmlns=\"http://www.w3.org/2000/svg\" version=\"1.1\" width=\"" << width
      << "\" height=\"" << height << "\" font-family=\"sans-serif\" font-size=\"11\">\n";
  for (std::size_t c = 0; c < r.configs.size(); ++c)
    out << "  <text x=\"" << left + cell_w * static_cast<int>(c) + cell_w / 2 << "\" y=\""
        << top - 10 << "\" text-anchor=\"middle\">" << r.configs[c].tag() << "</text>\n";
  for (std::size_t s = 0; s < scenes.size(); ++s) {
    const int y = top + cell_h * static_cast<int>(s);
    out << "  <text x=\"" << left - 6 << "\" y=\"" << y + cell_h / 2 + 4
        << "\" text-anchor=\"end\">" << scenes[s].name() << "</text>\n";
    for (std::size_t c = 0; c < r.configs.size(); ++c) {
      const double acc = r.configs[c].scene_accuracy(scenes[s]);
      // White at 0% to dark blue at 100%.
      const int red = static_cast<int>(255.0 - acc * (255.0 - 8.0));
      const int green = static_cast<int>(255.0 - acc * (255.0 - 48.0));
      const int blue = static_cast<int>(255.0 - acc * (255.0 - 107.0));
      const int x = left + cell_w * static_cast<int>(c);
      out << "  <rect class=\"cell\" x=\"" << x << "\" y=\"" << y << "\" width=\"" << cell_w
          << "\" height=\"" << cell_h << "\" fill=\"rgb(" << red << ',' << green << ',' << blue
          << ")\" stroke=\"#ffffff\"/>\n";
      out << "  <text x=\"" << x + cell_w / 2 << "\" y=\"" << y + cell_h / 2 + 4
          << "\" text-anchor=\"middle\" fill=\"" << (acc > 0.5 ? "#ffffff" : "#000000") << "\">"
          << percent(acc) << "</text>\n";
    }
  }
  out << "</svg>\n";
  return out.str();
}

std::string report_json(const EvalReport& r) {
  json configs = json::array();
  for (const auto& c : r.configs) {
    json mods = json::array(), views = json::array(), missing = json::array();
    for (auto m : c.spec.modalities) mods.push_back(std::string(modality_code(m)));
    for (auto v : c.spec.views) views.push_back(std::string(view_code(v)));
    for (auto m : c.missing) missing.push_back(std::string(modality_code(m)));
    json per_scene = json::object();
    for (const auto& [s, m] : c.confusion) {
      json uni = json::object();
      for (const auto& [mod, _] : c.unimodal)
        uni[std::string(modality_code(mod))] = c.unimodal_accuracy(mod, s);
      per_scene[s.name()] = {{"accuracy", accuracy(m)}, {"unimodal", uni}, {"confusion", m}};
    }
    configs.push_back({{"tag", c.tag()},
                       {"name", c.spec.name},
                       {"modalities", mods},
                       {"views", views},
                       {"missing", missing},
                       {"overall_accuracy", c.overall_accuracy()},
                       {"fold_accuracy", c.fold_accuracy},
                       {"scenes", per_scene}});
  }
  const json j = {{"seed", r.seed},
                  {"folds", r.n_folds},
                  {"classifier", std::string(classifiers::kind_name(r.classifier))},
                  {"points", r.n_points},
                  {"trust_folds", r.trust_folds},
                  {"configurations", configs}};
  return j.dump(2) + "\n";
}

void emit_report(const EvalReport& r, const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
  write_file(dir / "accuracy_by_scene.csv", accuracy_csv(r));
  write_file(dir / "unimodal_by_scene.csv", unimodal_csv(r));
  for (const auto& s : r.scenes()) write_file(dir / ("confusion_" + s.name() + ".csv"), confusion_csv(r, s));
  write_file(dir / "heatmap_accuracy.svg", heatmap_svg(r));
  write_file(dir / "report.json", report_json(r));
}

}  // namespace mmtrust::eval
