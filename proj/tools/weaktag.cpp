// weaktag command-line tool: synth, featurize, train, cv, eval, visualize, localize.

#include <weaktag.hpp>

#include <CLI11.hpp>
#include <json.hpp>
#include <openssl/evp.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;
using namespace weaktag;

namespace {

constexpr int kExitUsage = 2;
constexpr int kExitData = 3;
constexpr int kExitNumeric = 4;

std::string hex(const unsigned char* p, std::size_t n) {
  static const char* digits = "0123456789abcdef";
  std::string out;
  for (std::size_t i = 0; i < n; ++i) {
    out += digits[p[i] >> 4];
    out += digits[p[i] & 15];
  }
  return out;
}

std::string sha256(std::string_view bytes) {
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), md, &len, EVP_sha256(), nullptr) != 1)
    fail(Errc::io_failure, "sha256");
  return hex(md, len);
}

std::string sha256_file(const fs::path& path) {
  const auto bytes = io::read_file(path);
  return sha256(std::string_view(bytes.data(), bytes.size()));
}

json file_input(const fs::path& path) {
  return {{"path", path.generic_string()}, {"sha256", sha256_file(path)}};
}

/// Index, vocabulary and annotations by their own digests; the audio as one
/// digest over "clip_id sha256" lines in index order.
json dataset_inputs(const fs::path& dir) {
  json inputs = json::array();
  require(fs::exists(layout::index(dir)), Errc::file_not_found, layout::index(dir).string());
  for (const auto& f : {layout::index(dir), layout::vocabulary(dir), layout::annotations(dir)})
    if (fs::exists(f)) inputs.push_back(file_input(f));
  const auto index = load_weak_labels(layout::index(dir), read_dataset_vocabulary(dir));
  std::string listing;
  for (const auto& e : index.entries) {
    const auto wav = layout::audio(dir, e.clip_id);
    require(fs::exists(wav), Errc::file_not_found, wav.string());
    listing += e.clip_id + ' ' + sha256_file(wav) + '\n';
  }
  inputs.push_back({{"path", (dir / "audio").generic_string()},
                    {"clips", index.entries.size()},
                    {"sha256", sha256(listing)}});
  return inputs;
}

void write_manifest(const fs::path& dir, const std::string& command, const json& config,
                    std::optional<std::uint64_t> seed, const json& inputs) {
  json doc;
  doc["tool"] = "weaktag";
  doc["version"] = kVersion;
  doc["command"] = command;
  doc["config"] = config;
  doc["seed"] = seed ? json(*seed) : json(nullptr);
  doc["inputs"] = inputs;
  save_text(dir / "manifest.json", doc.dump(2) + "\n");
}

template <class Fn>
void write_text_file(const fs::path& path, Fn&& body) {
  std::ostringstream out;
  body(out);
  save_text(path, out.str());
}

// ---------------------------------------------------------------------------
// Shared flags

struct DataFlags {
  std::string data;
  std::string cache;
  std::string split = "development";
  std::vector<int> folds;
  std::vector<std::string> exclude_tags;
  std::size_t threads = std::max(1U, std::thread::hardware_concurrency());
};

void add_data_flags(CLI::App* cmd, DataFlags& f, bool with_exclude, const std::string& default_split) {
  f.split = default_split;
  cmd->add_option("--data", f.data, "Dataset directory (index.csv, audio/)")->required();
  cmd->add_option("--cache", f.cache, "Feature cache directory (default: $WEAKTAG_CACHE/<dataset key>)");
  cmd->add_option("--split", f.split, "Clips to use")
      ->check(CLI::IsMember({"development", "evaluation", "all"}))
      ->capture_default_str();
  if (with_exclude)
    cmd->add_option("--exclude-tags", f.exclude_tags, "Tags dropped from the vocabulary (e.g. S)")
        ->delimiter(',');
  cmd->add_option("--threads", f.threads, "Worker threads")->check(CLI::PositiveNumber)->capture_default_str();
}

std::optional<fs::path> resolve_cache(const DataFlags& f) {
  if (!f.cache.empty()) return fs::path(f.cache);
  if (const char* root = std::getenv("WEAKTAG_CACHE"); root && *root) {
    std::error_code ec;
    auto canonical = fs::weakly_canonical(fs::path(f.data), ec);
    if (ec) canonical = fs::absolute(fs::path(f.data));
    return fs::path(root) / sha256(canonical.generic_string()).substr(0, 16);
  }
  return std::nullopt;
}

LoadOptions load_options(const DataFlags& f, std::vector<int> folds) {
  LoadOptions opt;
  if (f.split != "all") opt.split = parse_split(f.split);
  opt.folds = std::move(folds);
  opt.exclude_tags = f.exclude_tags;
  opt.cache_dir = resolve_cache(f);
  opt.threads = f.threads;
  return opt;
}

json data_config(const DataFlags& f) {
  const auto cache = resolve_cache(f);
  return {{"data", f.data},
          {"cache", cache ? json(cache->generic_string()) : json(nullptr)},
          {"split", f.split},
          {"exclude_tags", f.exclude_tags},
          {"threads", f.threads}};
}

void print_warnings(const std::vector<std::string>& warnings) {
  for (const auto& w : warnings) std::cerr << "warning: " << w << '\n';
}

struct ModelFlags {
  std::string model = "jdc";
  std::size_t epochs = 50;
  double lr = 2e-4;
  std::size_t batch = 32;
  std::uint64_t seed = 0;
  std::size_t hidden_layers = 3;
  std::size_t hidden_units = 500;
  float dropout = 0.2F;
};

void add_model_flags(CLI::App* cmd, ModelFlags& f) {
  cmd->add_option("--model", f.model, "Model kind")->check(CLI::IsMember({"bob", "jdc"}))->capture_default_str();
  cmd->add_option("--epochs", f.epochs, "Training epochs")->capture_default_str();
  cmd->add_option("--lr", f.lr, "Adam learning rate")->check(CLI::PositiveNumber)->capture_default_str();
  cmd->add_option("--batch", f.batch, "Clips per update")->check(CLI::PositiveNumber)->capture_default_str();
  cmd->add_option("--seed", f.seed, "Seed for init, shuffling and dropout")->capture_default_str();
  cmd->add_option("--hidden-layers", f.hidden_layers, "Hidden layers")->check(CLI::PositiveNumber)->capture_default_str();
  cmd->add_option("--hidden-units", f.hidden_units, "Units per hidden layer")->check(CLI::PositiveNumber)->capture_default_str();
  cmd->add_option("--dropout", f.dropout, "Dropout probability on hidden layers")
      ->check(CLI::Range(0.0, 0.999))
      ->capture_default_str();
}

ModelSpec model_spec(const ModelFlags& f, std::size_t num_tags) {
  ModelSpec spec;
  spec.kind = parse_model_kind(f.model);
  spec.hidden_layers = f.hidden_layers;
  spec.hidden_units = f.hidden_units;
  spec.dropout = f.dropout;
  spec.num_tags = num_tags;
  return spec;
}

TrainConfig train_config(const ModelFlags& f, std::size_t threads) {
  TrainConfig cfg;
  cfg.adam.learning_rate = f.lr;
  cfg.epochs = f.epochs;
  cfg.batch_size = f.batch;
  cfg.seed = f.seed;
  cfg.threads = threads;
  return cfg;
}

json model_config(const ModelFlags& f) {
  const AdamConfig adam;
  return {{"model", f.model},
          {"epochs", f.epochs},
          {"lr", f.lr},
          {"adam_beta1", adam.beta1},
          {"adam_beta2", adam.beta2},
          {"adam_eps", adam.eps},
          {"batch", f.batch},
          {"hidden_layers", f.hidden_layers},
          {"hidden_units", f.hidden_units},
          {"dropout", std::stod(format_number(f.dropout))},
          {"block_len", kBlockLength},
          {"mel_bins", kMelBins},
          {"frame_len", kFrameLength},
          {"sample_rate", kDefaultSampleRate}};
}

std::string join(const std::vector<int>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) out += (i ? "," : "") + std::to_string(v[i]);
  return out;
}

// ---------------------------------------------------------------------------
// synth

struct SynthFlags {
  SynthConfig cfg;
  std::string out;
};

void run_synth(const SynthFlags& f) {
  const auto& c = f.cfg;
  const json config = {{"out", f.out},
                       {"clips", c.clips},
                       {"tags", c.tags},
                       {"clip_seconds", c.clip_seconds},
                       {"min_events", c.min_events},
                       {"max_events", c.max_events},
                       {"min_event_seconds", c.min_event_seconds},
                       {"max_event_seconds", c.max_event_seconds},
                       {"sample_rate", c.sample_rate},
                       {"noise_level", c.noise_level},
                       {"allow_overlap", c.allow_overlap},
                       {"folds", c.folds}};
  const auto data = synth_generate(c);
  fs::create_directories(f.out);
  write_manifest(f.out, "synth", config, c.seed, json::array());
  write_synth_dataset(f.out, data);
  std::cout << "wrote " << data.clips.size() << " clips to " << f.out << '\n';
}

// ---------------------------------------------------------------------------
// featurize

void run_featurize(DataFlags f) {
  if (!resolve_cache(f)) f.cache = (fs::path(f.data) / "cache").string();
  const auto cache = *resolve_cache(f);
  fs::create_directories(cache);
  write_manifest(cache, "featurize", data_config(f), std::nullopt, dataset_inputs(f.data));
  const auto loaded = load_dataset(f.data, load_options(f, {}));
  print_warnings(loaded.warnings);
  std::cout << "featurized " << loaded.clips.size() << " clips into " << cache.generic_string() << '\n';
}

// ---------------------------------------------------------------------------
// train

struct TrainFlags {
  DataFlags data;
  ModelFlags model;
  std::vector<int> train_folds;
  int val_fold = 0;
  std::string out;
};

void run_train(const TrainFlags& f) {
  require(f.val_fold == 0 || std::find(f.train_folds.begin(), f.train_folds.end(), f.val_fold) ==
                                 f.train_folds.end(),
          Errc::invalid_argument, "validation fold is also a training fold");
  json config = data_config(f.data);
  config.update(model_config(f.model));
  config["train_folds"] = f.train_folds;
  config["val_fold"] = f.val_fold;
  config["out"] = f.out;
  fs::create_directories(f.out);
  write_manifest(f.out, "train", config, f.model.seed, dataset_inputs(f.data.data));

  std::vector<int> folds = f.train_folds;
  if (!folds.empty() && f.val_fold != 0) folds.push_back(f.val_fold);
  const auto loaded = load_dataset(f.data.data, load_options(f.data, folds));
  print_warnings(loaded.warnings);
  Dataset train_set, validation;
  for (const auto& c : loaded.clips) (f.val_fold != 0 && c.fold == f.val_fold ? validation : train_set).push_back(c);
  require(f.val_fold == 0 || !validation.empty(), Errc::empty_fold,
          "validation fold " + std::to_string(f.val_fold) + " has no clips");

  const auto spec = model_spec(f.model, loaded.vocabulary.size());
  const auto cfg = train_config(f.model, f.data.threads);
  std::cout << "training " << to_string(spec.kind) << " on " << train_set.size() << " clips";
  if (!validation.empty()) std::cout << ", validating on " << validation.size();
  std::cout << '\n';
  auto result = train(spec, loaded.vocabulary, train_set, cfg, validation.empty() ? nullptr : &validation,
                      [](const Tagger&, const EpochRecord& r) {
                        std::cout << "epoch " << r.epoch << " loss " << format_number(r.train_loss);
                        if (r.val_eer) std::cout << " val_eer " << format_number(*r.val_eer);
                        std::cout << std::endl;
                      });
  save_checkpoint(fs::path(f.out) / "model.wtck", result.model);
  write_text_file(fs::path(f.out) / "history.csv", [&](std::ostream& o) { write_history_csv(o, result.history); });
}

// ---------------------------------------------------------------------------
// cv

struct CvFlags {
  DataFlags data;
  ModelFlags model;
  int folds = 5;
  std::string out;
};

void run_cv(const CvFlags& f) {
  json config = data_config(f.data);
  config.update(model_config(f.model));
  config["folds"] = f.folds;
  config["out"] = f.out;
  fs::create_directories(f.out);
  write_manifest(f.out, "cv", config, f.model.seed, dataset_inputs(f.data.data));

  const auto loaded = load_dataset(f.data.data, load_options(f.data, {}));
  print_warnings(loaded.warnings);
  const auto spec = model_spec(f.model, loaded.vocabulary.size());
  const auto cv = cross_validate(spec, loaded.vocabulary, loaded.clips, train_config(f.model, f.data.threads), f.folds);

  for (const auto& fr : cv.folds) {
    write_text_file(fs::path(f.out) / ("history_fold" + std::to_string(fr.fold) + ".csv"),
                    [&](std::ostream& o) { write_history_csv(o, fr.history); });
    std::cout << "fold " << fr.fold << ": " << fr.train_clips << " train, " << fr.val_clips << " held out, final EER "
              << (fr.final_eer ? format_number(*fr.final_eer) : "n/a") << '\n';
  }
  write_text_file(fs::path(f.out) / "summary.csv", [&](std::ostream& o) {
    o << "epoch";
    for (const auto& fr : cv.folds) o << ",fold" << fr.fold;
    o << ",mean\n";
    for (std::size_t e = 0; e < cv.mean_eer_by_epoch.size(); ++e) {
      o << e + 1;
      for (const auto& fr : cv.folds)
        o << ',' << (fr.history[e].val_eer ? format_number(*fr.history[e].val_eer) : "");
      o << ',' << (cv.mean_eer_by_epoch[e] ? format_number(*cv.mean_eer_by_epoch[e]) : "") << '\n';
    }
  });
  if (cv.mean_eer) std::cout << "mean EER at last epoch " << format_number(*cv.mean_eer) << '\n';
  if (cv.best_epoch)
    std::cout << "best epoch " << *cv.best_epoch << " (mean EER "
              << format_number(*cv.mean_eer_by_epoch[*cv.best_epoch - 1]) << ")\n";
}

// ---------------------------------------------------------------------------
// eval / localize

/// Loads the dataset restricted to the checkpoint's tags, in its order.
LoadedDataset load_for_model(const DataFlags& f, const std::vector<int>& folds, const Tagger& model) {
  const auto full = read_dataset_vocabulary(f.data);
  for (const auto& t : model.vocabulary().tags())
    require(full.index_of(t).has_value(), Errc::unknown_tag, "checkpoint tag '" + t + "' is not in the dataset vocabulary");
  DataFlags narrowed = f;
  narrowed.exclude_tags.clear();
  for (const auto& t : full.tags())
    if (!model.vocabulary().index_of(t)) narrowed.exclude_tags.push_back(t);
  auto loaded = load_dataset(f.data, load_options(narrowed, folds));
  require(loaded.vocabulary.tags() == model.vocabulary().tags(), Errc::tag_count_mismatch,
          "dataset and checkpoint order their tags differently");
  return loaded;
}

struct EvalFlags {
  DataFlags data;
  std::string checkpoint;
  std::string pooling = "per-tag";
  bool allow_skipped = false;
  std::string out;
};

int run_eval(const EvalFlags& f) {
  json config = data_config(f.data);
  config["checkpoint"] = f.checkpoint;
  config["folds"] = f.data.folds;
  config["eer_pooling"] = f.pooling;
  config["allow_skipped"] = f.allow_skipped;
  config["out"] = f.out;
  const auto model = load_checkpoint(f.checkpoint);
  json inputs = dataset_inputs(f.data.data);
  inputs.push_back(file_input(f.checkpoint));
  fs::create_directories(f.out);
  write_manifest(f.out, "eval", config, std::nullopt, inputs);

  const auto loaded = load_for_model(f.data, f.data.folds, model);
  print_warnings(loaded.warnings);
  const auto scored = score_dataset(model, loaded.clips, f.data.threads);
  const auto report = summarize_eer(scored, parse_eer_pooling(f.pooling));
  std::ostringstream csv;
  write_eer_report(csv, report);
  save_text(fs::path(f.out) / "report.csv", csv.str());
  write_text_file(fs::path(f.out) / "scores.csv", [&](std::ostream& o) {
    o << "clip_id";
    for (const auto& t : scored.vocabulary.tags()) o << ',' << t;
    o << '\n';
    for (std::size_t i = 0; i < scored.clip_ids.size(); ++i) {
      o << scored.clip_ids[i];
      for (const auto& s : scored.scores) o << ',' << format_number(s[i]);
      o << '\n';
    }
  });
  std::cout << csv.str();
  if (report.skipped() > 0) {
    std::cerr << (f.allow_skipped ? "warning: " : "error: ") << report.skipped()
              << " tag(s) skipped: EER undefined without both positive and negative clips\n";
    if (!f.allow_skipped) return kExitData;
  }
  return 0;
}

struct LocalizeFlags {
  DataFlags data;
  std::string checkpoint;
  std::string map = "product";
  std::string out;
};

void run_localize(const LocalizeFlags& f) {
  json config = data_config(f.data);
  config["checkpoint"] = f.checkpoint;
  config["folds"] = f.data.folds;
  config["map"] = f.map;
  config["out"] = f.out;
  const auto model = load_checkpoint(f.checkpoint);
  json inputs = dataset_inputs(f.data.data);
  inputs.push_back(file_input(f.checkpoint));
  fs::create_directories(f.out);
  write_manifest(f.out, "localize", config, std::nullopt, inputs);

  const auto loaded = load_for_model(f.data, f.data.folds, model);
  const auto annotations = load_annotations(layout::annotations(f.data.data));
  const auto map = parse_saliency_map(f.map);
  const auto scores = localization_score(model, loaded.clips, annotations, map, {}, f.data.threads);
  std::optional<std::vector<TagLocalization>> ablation;
  if (model.spec().kind == ModelKind::jdc)
    ablation = localization_score(with_constant_detector(model), loaded.clips, annotations, map, {}, f.data.threads);
  write_text_file(fs::path(f.out) / "localization.csv", [&](std::ostream& o) {
    o << "tag,clips,positive_blocks,negative_blocks,auc,constant_detector_auc\n";
    for (std::size_t k = 0; k < scores.size(); ++k) {
      const auto& r = scores[k];
      o << r.tag << ',' << r.clips << ',' << r.positive_blocks << ',' << r.negative_blocks << ','
        << (r.auc ? format_number(*r.auc) : "") << ','
        << (ablation && (*ablation)[k].auc ? format_number(*(*ablation)[k].auc) : "") << '\n';
    }
  });
  for (std::size_t k = 0; k < scores.size(); ++k)
    std::cout << scores[k].tag << " auc " << (scores[k].auc ? format_number(*scores[k].auc) : "n/a")
              << (ablation && (*ablation)[k].auc ? " constant-detector " + format_number(*(*ablation)[k].auc) : "")
              << '\n';
}

// ---------------------------------------------------------------------------
// visualize

struct VisualizeFlags {
  std::string checkpoint;
  std::string data;
  std::string clip;
  std::string wav;
  bool classifier_only = false;
  std::string out;
};

template <class Fn>
void write_matrix(const fs::path& path, std::size_t rows, std::size_t cols, Fn&& at) {
  write_text_file(path, [&](std::ostream& o) {
    for (std::size_t r = 0; r < rows; ++r) {
      for (std::size_t c = 0; c < cols; ++c) o << (c ? "," : "") << format_number(at(r, c));
      o << '\n';
    }
  });
}

void run_visualize(const VisualizeFlags& f) {
  require(!f.wav.empty() || (!f.data.empty() && !f.clip.empty()), Errc::invalid_argument,
          "give --wav, or --data with --clip");
  const auto model = load_checkpoint(f.checkpoint);
  if (model.spec().kind != ModelKind::jdc && !f.classifier_only)
    fail(Errc::model_kind_mismatch,
         "a BOB checkpoint has no detector, so w_norm and the product map are undefined; "
         "pass --classifier-only to dump the classifier map alone");
  const fs::path wav = f.wav.empty() ? layout::audio(f.data, f.clip) : fs::path(f.wav);
  const json config = {{"checkpoint", f.checkpoint}, {"data", f.data},   {"clip", f.clip},
                       {"wav", f.wav},               {"classifier_only", f.classifier_only},
                       {"out", f.out}};
  fs::create_directories(f.out);
  write_manifest(f.out, "visualize", config, std::nullopt,
                 json::array({file_input(f.checkpoint), file_input(wav)}));

  auto clip = load_wav(wav);
  clip.id = f.clip.empty() ? wav.stem().string() : f.clip;
  const auto blocks = make_blocks(Featurizer()(clip), model.spec().block_len, 1);
  Rng unused(0);
  const auto maps = model.forward(blocks, Mode::eval, unused).score_maps();
  const fs::path out = f.out;
  const auto& feat = blocks.features();
  write_matrix(out / "logmel.csv", feat.frames(), feat.bins(), [&](auto r, auto c) { return double{feat(r, c)}; });
  write_matrix(out / "y.csv", maps.y.rows, maps.y.cols, [&](auto r, auto c) { return double{maps.y(r, c)}; });
  if (model.spec().kind == ModelKind::jdc) {
    write_matrix(out / "w_norm.csv", maps.w_norm.rows, maps.w_norm.cols,
                 [&](auto r, auto c) { return double{maps.w_norm(r, c)}; });
    write_matrix(out / "product.csv", maps.y.rows, maps.y.cols,
                 [&](auto r, auto c) { return double{maps.w_norm(r, c)} * double{maps.y(r, c)}; });
  }
  write_text_file(out / "blocks.csv", [&](std::ostream& o) {
    o << "block,first_frame,start_seconds,end_seconds\n";
    for (std::size_t m = 0; m < blocks.size(); ++m) {
      const auto [start, end] = block_span_seconds(blocks, m);
      o << m << ',' << blocks.first_frame(m) << ',' << format_number(start) << ',' << format_number(end) << '\n';
    }
  });
  std::cout << "T=" << feat.frames() << " M=" << blocks.size() << " K=" << model.spec().num_tags << " tags=";
  for (const auto& t : model.vocabulary().tags()) std::cout << t;
  std::cout << '\n';
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Weakly labelled audio tagging with joint detection-classification (JDC) and bag-of-blocks (BOB) models"};
  app.set_version_flag("--version", std::string(kVersion));
  app.require_subcommand(1);

  SynthFlags synth;
  auto* synth_cmd = app.add_subcommand("synth", "Generate a synthetic weakly labelled dataset");
  synth_cmd->add_option("--out", synth.out, "Output dataset directory")->required();
  synth_cmd->add_option("--clips", synth.cfg.clips, "Number of clips")->capture_default_str();
  synth_cmd->add_option("--tags", synth.cfg.tags, "Number of tags (1..4)")->check(CLI::Range(1, 4))->capture_default_str();
  synth_cmd->add_option("--seed", synth.cfg.seed, "Generator seed")->capture_default_str();
  synth_cmd->add_option("--clip-seconds", synth.cfg.clip_seconds, "Clip length")->capture_default_str();
  synth_cmd->add_option("--min-events", synth.cfg.min_events, "Fewest events per clip")->capture_default_str();
  synth_cmd->add_option("--max-events", synth.cfg.max_events, "Most events per clip")->capture_default_str();
  synth_cmd->add_option("--min-event-seconds", synth.cfg.min_event_seconds, "Shortest event")->capture_default_str();
  synth_cmd->add_option("--max-event-seconds", synth.cfg.max_event_seconds, "Longest event")->capture_default_str();
  synth_cmd->add_option("--noise", synth.cfg.noise_level, "Noise floor standard deviation")->capture_default_str();
  synth_cmd->add_option("--folds", synth.cfg.folds, "Fold ids assigned round-robin")->check(CLI::PositiveNumber)->capture_default_str();
  synth_cmd->add_flag("--allow-overlap", synth.cfg.allow_overlap, "Let events overlap");

  DataFlags featurize;
  auto* featurize_cmd = app.add_subcommand("featurize", "Compute and cache log-mel features");
  add_data_flags(featurize_cmd, featurize, false, "all");

  TrainFlags train_flags;
  auto* train_cmd = app.add_subcommand("train", "Train one model");
  add_data_flags(train_cmd, train_flags.data, true, "development");
  add_model_flags(train_cmd, train_flags.model);
  train_cmd->add_option("--train-folds", train_flags.train_folds, "Training folds (default: every clip not in --val-fold)")
      ->delimiter(',');
  train_cmd->add_option("--val-fold", train_flags.val_fold, "Held-out fold scored after every epoch (0: none)")
      ->capture_default_str();
  train_cmd->add_option("--out", train_flags.out, "Output directory")->required();

  CvFlags cv;
  auto* cv_cmd = app.add_subcommand("cv", "k-fold cross-validation");
  add_data_flags(cv_cmd, cv.data, true, "development");
  add_model_flags(cv_cmd, cv.model);
  cv_cmd->add_option("--folds", cv.folds, "Number of folds")->check(CLI::Range(2, 1000))->capture_default_str();
  cv_cmd->add_option("--out", cv.out, "Output directory")->required();

  EvalFlags eval;
  auto* eval_cmd = app.add_subcommand("eval", "EER report for a checkpoint");
  add_data_flags(eval_cmd, eval.data, false, "all");
  eval_cmd->add_option("--folds", eval.data.folds, "Only these folds")->delimiter(',');
  eval_cmd->add_option("--checkpoint", eval.checkpoint, "Model checkpoint")->required();
  eval_cmd->add_option("--eer-pooling", eval.pooling, "Average per-tag EERs, or one EER over all decisions")
      ->check(CLI::IsMember({"per-tag", "pooled"}))
      ->capture_default_str();
  eval_cmd->add_flag("--allow-skipped", eval.allow_skipped, "Exit 0 even when a tag's EER is undefined");
  eval_cmd->add_option("--out", eval.out, "Output directory")->required();

  LocalizeFlags localize;
  auto* localize_cmd = app.add_subcommand("localize", "Block-level localization AUC against annotations.csv");
  add_data_flags(localize_cmd, localize.data, false, "all");
  localize_cmd->add_option("--folds", localize.data.folds, "Only these folds")->delimiter(',');
  localize_cmd->add_option("--checkpoint", localize.checkpoint, "Model checkpoint")->required();
  localize_cmd->add_option("--map", localize.map, "Block score")
      ->check(CLI::IsMember({"product", "detector", "classifier"}))
      ->capture_default_str();
  localize_cmd->add_option("--out", localize.out, "Output directory")->required();

  VisualizeFlags vis;
  auto* vis_cmd = app.add_subcommand("visualize", "Dump log-mel, detector, classifier and product maps of one clip");
  vis_cmd->add_option("--checkpoint", vis.checkpoint, "JDC checkpoint")->required();
  vis_cmd->add_option("--data", vis.data, "Dataset directory");
  vis_cmd->add_option("--clip", vis.clip, "Clip id within --data");
  vis_cmd->add_option("--wav", vis.wav, "Standalone WAV instead of --data/--clip");
  vis_cmd->add_flag("--classifier-only", vis.classifier_only, "Accept a BOB checkpoint and dump the classifier map only");
  vis_cmd->add_option("--out", vis.out, "Output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : kExitUsage;
  }

  try {
    if (*synth_cmd) run_synth(synth);
    if (*featurize_cmd) run_featurize(featurize);
    if (*train_cmd) run_train(train_flags);
    if (*cv_cmd) run_cv(cv);
    if (*eval_cmd) return run_eval(eval);
    if (*localize_cmd) run_localize(localize);
    if (*vis_cmd) run_visualize(vis);
  } catch (const Error& e) {
    std::cerr << "error [" << errc_name(e.code()) << "]: " << e.what() << '\n';
    if (e.is_numeric()) return kExitNumeric;
    if (e.code() == Errc::invalid_argument) return kExitUsage;
    return kExitData;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitData;
  }
  return 0;
}
