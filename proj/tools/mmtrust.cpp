// Command-line front end: generate, train, eval, predict.

#include <cstdio>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "mmtrust/eval.hpp"
#include "mmtrust/fusion.hpp"
#include "mmtrust/synthdata.hpp"

using namespace mmtrust;

namespace {

enum Exit : int {
  kOk = 0,
  kBadArgs = 2,
  kIo = 3,
  kTraining = 4,
  kModel = 5,
};

struct Global {
  std::uint64_t seed = 7;
  std::string out_dir = ".";
  std::size_t threads = 0;

  std::filesystem::path resolve(const std::string& p) const {
    const std::filesystem::path path(p);
    return path.is_absolute() ? path : std::filesystem::path(out_dir) / path;
  }
};

std::vector<std::string> split_list(const std::vector<std::string>& items) {
  std::vector<std::string> out;
  for (const auto& item : items) {
    std::stringstream ss(item);
    std::string tok;
    while (std::getline(ss, tok, ','))
      if (!tok.empty()) out.push_back(tok);
  }
  return out;
}

std::set<Modality> parse_modalities(const std::vector<std::string>& codes) {
  std::set<Modality> out;
  for (const auto& code : split_list(codes))
    for (char c : code) out.insert(modality_from_code(std::string_view(&c, 1)));
  return out;
}

void print_trust_table(const fusion::TrustedModel& model) {
  std::printf("%-22s", "scene");
  for (auto m : model.config.modalities) std::printf(" %8s", std::string(modality_code(m)).c_str());
  std::printf("\n");
  for (const auto& [scene, t] : model.trust_table) {
    std::printf("%-22s", scene.name().c_str());
    for (double w : t.w) std::printf(" %8.4f", w);
    std::printf("\n");
  }
}

// ---------------------------------------------------------------------------

struct GenerateArgs {
  int actors = 2;
  int sessions = 2;
  std::string out;
};

int cmd_generate(const Global& g, const GenerateArgs& a) {
  synthdata::GeneratorConfig cfg;
  cfg.seed = g.seed;
  cfg.n_actors = a.actors;
  cfg.sessions_per_actor = a.sessions;
  const Dataset ds = synthdata::generate(cfg, g.threads);
  const auto dir = g.resolve(a.out);
  synthdata::save_dataset(ds, dir);
  std::printf("K = %zu points written to %s\n", ds.size(), dir.string().c_str());
  for (const auto& [scene, part] : partition_by_scene(ds))
    std::printf("  %-22s %zu\n", scene.name().c_str(), part.size());
  return kOk;
}

struct TrainArgs {
  std::string data;
  std::string config = "MM";
  std::string clf = "svc";
  std::string out;
  std::size_t trust_folds = fusion::kDefaultTrustFolds;
};

int cmd_train(const Global& g, const TrainArgs& a) {
  const auto spec = eval::ConfigurationSpec::from_name(a.config);
  const auto kind = classifiers::kind_from_name(a.clf);
  const auto loaded = synthdata::load_dataset(g.resolve(a.data), g.threads);
  const Dataset ds = loaded.dataset.select(spec.modalities, spec.views);
  const auto model = fusion::train(ds, kind, g.seed, loaded.config.hog, loaded.config.gmom,
                                   loaded.config.registration(), g.threads, a.trust_folds);
  const auto out = g.resolve(a.out);
  fusion::save_model(model, out);
  std::printf("trained %s (%s) on %zu points, model written to %s\n", spec.name.c_str(),
              std::string(classifiers::kind_name(kind)).c_str(), ds.size(), out.string().c_str());
  print_trust_table(model);
  return kOk;
}

struct EvalArgs {
  std::string data;
  std::vector<std::string> configs{"MM"};
  std::string clf = "svc";
  std::size_t folds = 5;
  std::vector<std::string> missing;
  std::string out;
  std::size_t trust_folds = fusion::kDefaultTrustFolds;
};

int cmd_eval(const Global& g, const EvalArgs& a) {
  const auto kind = classifiers::kind_from_name(a.clf);
  std::vector<eval::ConfigurationSpec> specs;
  for (const auto& name : split_list(a.configs)) specs.push_back(eval::ConfigurationSpec::from_name(name));
  std::vector<std::set<Modality>> sweeps;
  for (const auto& code : split_list(a.missing)) sweeps.push_back(parse_modalities({code}));

  const auto loaded = synthdata::load_dataset(g.resolve(a.data), g.threads);
  eval::EvalReport report;
  for (const auto& spec : specs) {
    report = eval::merge(std::move(report), eval::run_cv(loaded.dataset, spec, kind, a.folds, g.seed,
                                                         g.threads, a.trust_folds));
    for (const auto& missing : sweeps) {
      bool applicable = true;
      for (auto m : missing)
        applicable &= std::find(spec.modalities.begin(), spec.modalities.end(), m) != spec.modalities.end();
      if (!applicable || missing.size() >= spec.modalities.size()) {
        std::fprintf(stderr, "skipping missing-modality run for %s: not a proper subset\n",
                     spec.name.c_str());
        continue;
      }
      report = eval::merge(std::move(report),
                           eval::run_missing_modality(loaded.dataset, spec, kind, missing, a.folds,
                                                      g.seed, g.threads, a.trust_folds));
    }
  }
  const auto out = g.resolve(a.out);
  eval::emit_report(report, out);
  for (const auto& c : report.configs)
    std::printf("%-10s overall %.1f%%\n", c.tag().c_str(), 100.0 * c.overall_accuracy());
  std::printf("report written to %s\n", out.string().c_str());
  return kOk;
}

struct PredictArgs {
  std::string model;
  std::string data;
  std::size_t point = 0;
  bool has_point = false;
  std::vector<std::string> images;
  std::string scene;
  std::vector<std::string> missing;
};

int cmd_predict(const Global& g, const PredictArgs& a) {
  const auto model = fusion::load_model(g.resolve(a.model));
  const auto channels = model.config.channels();

  DataPoint point;
  if (!a.data.empty()) {
    if (!a.has_point) throw CLI::ValidationError("--point", "required together with --data");
    const auto loaded = synthdata::load_dataset(g.resolve(a.data), g.threads);
    if (a.point >= loaded.dataset.size())
      throw CLI::ValidationError("--point", "index beyond the dataset size");
    point = loaded.dataset[a.point];
  } else {
    if (a.images.empty() || a.scene.empty())
      throw CLI::ValidationError("predict", "give --data/--point or --image and --scene");
    std::map<ChannelKey, GrayImage> images;
    for (const auto& spec : a.images) {
      const auto eq = spec.find('=');
      if (eq == std::string::npos)
        throw CLI::ValidationError("--image", "expected CHANNEL=FILE, got " + spec);
      images.emplace(ChannelKey::parse(spec.substr(0, eq)), read_pgm(g.resolve(spec.substr(eq + 1))));
    }
    point.scene = SceneCondition::from_name(a.scene);
    point.features = features::extract_registered(images, model.config.registration,
                                                  model.config.hog, model.config.gmom);
  }

  // Keep only the channels the model was trained on.
  std::map<ChannelKey, FeatureVector> kept;
  for (const auto& ch : channels) {
    const auto it = point.features.find(ch);
    if (it != point.features.end()) kept.emplace(ch, it->second);
  }
  point.features = std::move(kept);

  const auto missing = parse_modalities(a.missing);
  std::set<Modality> available;
  for (auto m : model.config.modalities) {
    if (missing.contains(m)) continue;
    bool has_channel = false;
    for (const auto& [key, f] : point.features) has_channel |= key.modality == m;
    if (has_channel) available.insert(m);
  }
  const auto pred = fusion::predict(model, point, available);

  std::printf("label %s\n", std::string(label_name(pred.label)).c_str());
  std::printf("probabilities");
  for (std::size_t l = 0; l < kNumLabels; ++l)
    std::printf(" %s=%.6f", std::string(label_name(label_from_index(l))).c_str(), pred.probabilities[l]);
  std::printf("\ntrust");
  for (std::size_t i = 0; i < pred.trust.modalities.size(); ++i)
    std::printf(" %s=%.6f", std::string(modality_code(pred.trust.modalities[i])).c_str(), pred.trust.w[i]);
  std::printf("\n");
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Modality-trust estimation and fusion for sleep-pose classification"};
  app.require_subcommand(1);
  app.failure_message(CLI::FailureMessage::help);
  Global g;
  app.add_option("--seed", g.seed, "Random seed")->capture_default_str();
  app.add_option("--out-dir", g.out_dir, "Base directory for relative paths")->capture_default_str();
  app.add_option("--threads", g.threads, "Worker threads (0 = all cores)")->capture_default_str();

  GenerateArgs gen;
  auto* generate = app.add_subcommand("generate", "Render a synthetic dataset");
  generate->add_option("--actors", gen.actors)->check(CLI::PositiveNumber)->capture_default_str();
  generate->add_option("--sessions", gen.sessions)->check(CLI::PositiveNumber)->capture_default_str();
  generate->add_option("--seed", g.seed, "Random seed");
  generate->add_option("--out", gen.out, "Dataset directory")->required();

  TrainArgs tr;
  auto* train = app.add_subcommand("train", "Fit classifiers and the trust table");
  train->add_option("--data", tr.data, "Dataset directory")->required();
  train->add_option("--config", tr.config)->check(CLI::IsMember({"MM", "MpM", "PMM", "PMpM"}))->capture_default_str();
  train->add_option("--clf", tr.clf)->check(CLI::IsMember({"lda", "svc"}))->capture_default_str();
  train->add_option("--trust-folds", tr.trust_folds, "Inner folds for trust scoring (0 = resubstitution)")->capture_default_str();
  train->add_option("--seed", g.seed, "Random seed");
  train->add_option("--out", tr.out, "Model file")->required();

  EvalArgs ev;
  auto* evaluate = app.add_subcommand("eval", "Cross-validated evaluation");
  evaluate->add_option("--data", ev.data, "Dataset directory")->required();
  evaluate->add_option("--config", ev.configs, "Configurations, comma separated")->capture_default_str();
  evaluate->add_option("--clf", ev.clf)->check(CLI::IsMember({"lda", "svc"}))->capture_default_str();
  evaluate->add_option("--folds", ev.folds)->check(CLI::Range(2, 1000))->capture_default_str();
  evaluate->add_option("--missing", ev.missing, "Modalities removed at test time, one run per value (e.g. P or RD)");
  evaluate->add_option("--trust-folds", ev.trust_folds, "Inner folds for trust scoring (0 = resubstitution)")->capture_default_str();
  evaluate->add_option("--seed", g.seed, "Random seed");
  evaluate->add_option("--out", ev.out, "Report directory")->required();

  PredictArgs pr;
  auto* predict = app.add_subcommand("predict", "Classify one observation");
  predict->add_option("--model", pr.model, "Model file")->required();
  predict->add_option("--data", pr.data, "Dataset directory holding the point");
  predict->add_option("--point", pr.point, "Point index in the dataset")->each([&](const std::string&) { pr.has_point = true; });
  predict->add_option("--image", pr.images, "CHANNEL=FILE, e.g. R-t=img.pgm or P=mat.pgm");
  predict->add_option("--scene", pr.scene, "Scene name, e.g. dark_blanketpillow");
  predict->add_option("--missing", pr.missing, "Modalities to treat as missing (R, D, P)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kBadArgs;
  }

  try {
    if (*generate) return cmd_generate(g, gen);
    if (*train) return cmd_train(g, tr);
    if (*evaluate) return cmd_eval(g, ev);
    if (*predict) return cmd_predict(g, pr);
  } catch (const CLI::ValidationError& e) {
    std::cerr << "error: " << e.what() << '\n' << app.help();
    return kBadArgs;
  } catch (const CorruptModel& e) {
    std::cerr << "CorruptModel: " << e.what() << '\n';
    return kModel;
  } catch (const VersionMismatch& e) {
    std::cerr << "VersionMismatch: " << e.what() << '\n';
    return kModel;
  } catch (const MissingClassifier& e) {
    std::cerr << "model mismatch: " << e.what() << '\n';
    return kModel;
  } catch (const UnknownScene& e) {
    std::cerr << "model mismatch: " << e.what() << '\n';
    return kModel;
  } catch (const IoError& e) {
    std::cerr << "IoError: " << e.what() << '\n';
    return kIo;
  } catch (const MissingFile& e) {
    std::cerr << "MissingFile: " << e.what() << '\n';
    return kIo;
  } catch (const ManifestMismatch& e) {
    std::cerr << "ManifestMismatch: " << e.what() << '\n';
    return kIo;
  } catch (const ImageFormatError& e) {
    std::cerr << "ImageFormatError: " << e.what() << '\n';
    return kIo;
  } catch (const InsufficientSamples& e) {
    std::cerr << "training failed: " << e.what() << '\n';
    return kTraining;
  } catch (const SingleClassTraining& e) {
    std::cerr << "training failed: " << e.what() << '\n';
    return kTraining;
  } catch (const EmptyTrainingSet& e) {
    std::cerr << "training failed: " << e.what() << '\n';
    return kTraining;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kBadArgs;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kBadArgs;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kTraining;
  }
  return kBadArgs;
}
