// Acceptance run: one PASS/FAIL/SKIP line per criterion, non-zero exit on
// any FAIL. INFO lines carry the measured numbers.

#include "oracles.hpp"

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <sys/wait.h>
#include <unistd.h>

using namespace weaktag;
namespace fs = std::filesystem;

namespace {

int failures = 0;

void report(bool ok, const std::string& name, const std::string& detail) {
  std::cout << (ok ? "PASS " : "FAIL ") << name << ": " << detail << std::endl;
  if (!ok) ++failures;
}

void info(const std::string& name, const std::string& detail) {
  std::cout << "INFO " << name << ": " << detail << std::endl;
}

std::string num(double v) { return format_number(v); }

Grid<double> random_scores(std::size_t rows, std::size_t cols, Rng& rng) {
  Grid<double> g(rows, cols);
  // Sigmoid outputs spread over a wide logit range.
  for (auto& v : g.values) v = 1.0 / (1.0 + std::exp(-rng.uniform(-12.0, 12.0)));
  return g;
}

// ---------------------------------------------------------------------------
// Property suite

void gradient_check() {
  double worst = 0.0;
  std::size_t configs = 0, coords = 0, kinks = 0;
  std::string where;
  for (auto kind : {ModelKind::jdc, ModelKind::bob})
    for (std::uint64_t seed = 0; seed < 60; ++seed) {
      const auto c = oracle::random_case(kind, 5000 + seed);
      Rng unused(0);
      const auto grads = c.model.backward(c.model.forward(c.blocks, Mode::eval, unused), c.label);
      const auto cmp = oracle::check_gradients(c.model, c.blocks, c.label, grads);
      ++configs;
      coords += cmp.checked;
      kinks += cmp.skipped_kinks;
      if (cmp.max_rel_error > worst) {
        worst = cmp.max_rel_error;
        where = std::string(to_string(kind)) + " seed " + std::to_string(seed) + " " + cmp.worst;
      }
    }
  // Full-size networks (440-500-500-500-K), every 499th coordinate.
  for (auto kind : {ModelKind::jdc, ModelKind::bob}) {
    Rng rng(kind == ModelKind::jdc ? 31 : 32);
    ModelSpec spec;
    spec.kind = kind;
    spec.num_tags = 3;
    auto model = BasicTagger<double>::initialize(spec, TagVocabulary({"a", "b", "c"}), rng.next());
    for (auto& e : model.params())
      if (e.value.rank() == 1)
        for (auto& v : e.value.data()) v = 0.1 * rng.normal();
    FeatureMatrix f{Grid<float>(16, 40)};
    for (auto& v : f.grid.values) v = static_cast<float>(rng.normal());
    const auto blocks = make_blocks(std::move(f));
    const ClipLabel label{{1, 0, 1}};
    Rng unused(0);
    const auto grads = model.backward(model.forward(blocks, Mode::eval, unused), label);
    const auto cmp = oracle::check_gradients(model, blocks, label, grads, 1e-3, 1e-2, 499, 7);
    ++configs;
    coords += cmp.checked;
    kinks += cmp.skipped_kinks;
    if (cmp.max_rel_error > worst) {
      worst = cmp.max_rel_error;
      where = "full " + std::string(to_string(kind)) + " " + cmp.worst;
    }
  }
  report(configs >= 100 && worst < 1e-4, "gradient check",
         std::to_string(configs) + " configs, " + std::to_string(coords) + " coordinates (" +
             std::to_string(kinks) + " ReLU-kink coordinates skipped), max rel err " + num(worst) +
             (where.empty() ? "" : " at " + where));
}

void row_stochasticity() {
  Rng rng(101);
  double worst = 0.0;
  for (int i = 0; i < 10000; ++i) {
    const auto w = normalize_detector(random_scores(1 + rng.below(8), 1 + rng.below(100), rng));
    for (std::size_t k = 0; k < w.rows; ++k) {
      double s = 0.0;
      for (double v : w.row(k)) s += v;
      worst = std::max(worst, std::abs(s - 1.0));
    }
  }
  report(worst <= 1e-6, "row-stochasticity", "10000 inputs, max |row sum - 1| " + num(worst));
}

void bob_reduction() {
  Rng rng(102);
  double worst = 0.0;
  for (int i = 0; i < 10000; ++i) {
    const std::size_t k = 1 + rng.below(8), m = 1 + rng.below(100);
    const auto y = random_scores(k, m, rng);
    const auto w = normalize_detector(Grid<double>(k, m, rng.uniform(0.001, 1.0)));
    const auto a = jdc_pool(w, y), b = bob_predict(y);
    for (std::size_t r = 0; r < k; ++r) worst = std::max(worst, std::abs(a.p[r] - b.p[r]));
  }
  report(worst <= 1e-6, "BOB-reduction", "10000 score maps, max |jdc - bob| " + num(worst));
}

void scale_invariance() {
  Rng rng(103);
  double worst_w = 0.0, worst_p = 0.0;
  for (int i = 0; i < 10000; ++i) {
    const std::size_t k = 1 + rng.below(8), m = 1 + rng.below(100);
    const auto raw = random_scores(k, m, rng);
    const auto y = random_scores(k, m, rng);
    auto scaled = raw;
    const std::size_t row = rng.below(k);
    const double c = std::exp(rng.uniform(-5.0, 5.0));
    for (std::size_t j = 0; j < m; ++j) scaled(row, j) *= c;
    const auto a = normalize_detector(raw), b = normalize_detector(scaled);
    for (std::size_t j = 0; j < a.values.size(); ++j) worst_w = std::max(worst_w, std::abs(a.values[j] - b.values[j]));
    const auto pa = jdc_pool(a, y), pb = jdc_pool(b, y);
    for (std::size_t r = 0; r < k; ++r) worst_p = std::max(worst_p, std::abs(pa.p[r] - pb.p[r]));
  }
  report(worst_w <= 1e-6 && worst_p <= 1e-6, "detector scale invariance",
         "10000 rescaled rows, max |dw_norm| " + num(worst_w) + ", max |dp| " + num(worst_p));
}

void eer_oracle() {
  Rng rng(104);
  std::size_t exact = 0, interpolated = 0, exact_bad = 0;
  double worst_interp = 0.0;
  for (int i = 0; i < 1000; ++i) {
    const std::size_t n = 2 + rng.below(199);
    std::vector<double> s(n);
    std::vector<std::uint8_t> t(n);
    const double levels = 1.0 + static_cast<double>(rng.below(50));  // coarse grids force ties
    for (std::size_t j = 0; j < n; ++j) {
      t[j] = rng.bernoulli(0.4) ? 1 : 0;
      s[j] = std::floor(rng.uniform() * levels + (t[j] ? rng.uniform(0.0, 3.0) : 0.0));
    }
    t[0] = 1;
    t[1] = 0;
    const double got = compute_eer(s, t);
    const auto want = oracle::brute_force_eer(s, t);
    if (want.exact) {
      ++exact;
      if (got != want.eer) ++exact_bad;
    } else {
      ++interpolated;
      worst_interp = std::max(worst_interp, std::abs(got - want.eer));
    }
  }
  report(exact_bad == 0 && worst_interp <= 1e-9, "EER oracle",
         "1000 sets, " + std::to_string(exact) + " exact crossings (" + std::to_string(exact_bad) + " mismatched), " +
             std::to_string(interpolated) + " interpolated, max err " + num(worst_interp));
}

void dft_oracle() {
  Rng rng(105);
  double worst_complex = 0.0, worst_power = 0.0;
  const Fft fft(1024);
  std::vector<float> samples(100 * 1024);
  for (auto& v : samples) v = static_cast<float>(rng.uniform(-1.0, 1.0));
  const auto power = power_spectrogram(samples);
  for (std::size_t t = 0; t < 100; ++t) {
    const std::span<const float> frame(samples.data() + t * 1024, 1024);
    std::vector<double> x(frame.begin(), frame.end());
    std::vector<std::complex<double>> buf(x.begin(), x.end());
    fft.transform(buf);
    const auto ref = oracle::direct_dft(x);
    double num_sq = 0.0, den_sq = 0.0;
    for (std::size_t k = 0; k < 1024; ++k) {
      num_sq += std::norm(buf[k] - ref[k]);
      den_sq += std::norm(ref[k]);
    }
    worst_complex = std::max(worst_complex, std::sqrt(num_sq / den_sq));
    const auto ref_power = oracle::direct_power(frame);
    double pn = 0.0, pd = 0.0;
    for (std::size_t j = 0; j < ref_power.size(); ++j) {
      pn += (power(t, j) - ref_power[j]) * (power(t, j) - ref_power[j]);
      pd += ref_power[j] * ref_power[j];
    }
    worst_power = std::max(worst_power, std::sqrt(pn / pd));
  }
  report(worst_complex < 1e-6 && worst_power < 1e-6, "DFT oracle",
         "100 frames, max rel err " + num(worst_complex) + " (spectrum), " + num(worst_power) + " (windowed power)");
}

struct Run {
  int rc = -1;
  std::string err;
};

Run cli(const std::string& args, const fs::path& log) {
  const std::string cmd = std::string("'") + WEAKTAG_CLI_PATH + "' " + args + " >'" + log.string() + "' 2>&1";
  const int status = std::system(cmd.c_str());
  Run r;
  r.rc = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  std::ifstream in(log);
  std::stringstream ss;
  ss << in.rdbuf();
  r.err = ss.str();
  return r;
}

std::string q(const fs::path& p) { return "'" + p.string() + "'"; }

void determinism() {
  const fs::path root = fs::temp_directory_path() / ("weaktag_accept_" + std::to_string(::getpid()));
  fs::remove_all(root);
  std::vector<std::vector<char>> checkpoints, reports, features;
  std::string problem;
  for (int rep = 0; rep < 2 && problem.empty(); ++rep) {
    const fs::path dir = root / ("run" + std::to_string(rep));
    fs::create_directories(dir);
    const std::vector<std::string> steps = {
        "synth --out " + q(dir / "data") + " --clips 20 --seed 7",
        "featurize --data " + q(dir / "data") + " --cache " + q(dir / "cache"),
        "train --data " + q(dir / "data") + " --cache " + q(dir / "cache") +
            " --epochs 5 --batch 8 --seed 3 --val-fold 5 --out " + q(dir / "train"),
        "eval --data " + q(dir / "data") + " --cache " + q(dir / "cache") + " --checkpoint " +
            q(dir / "train" / "model.wtck") + " --folds 5 --allow-skipped --out " + q(dir / "eval"),
    };
    for (const auto& step : steps) {
      const auto r = cli(step, dir / "log.txt");
      if (r.rc != 0) {
        problem = "'" + step + "' exited " + std::to_string(r.rc) + ": " + r.err;
        break;
      }
    }
    if (!problem.empty()) break;
    checkpoints.push_back(io::read_file(dir / "train" / "model.wtck"));
    reports.push_back(io::read_file(dir / "eval" / "report.csv"));
    features.push_back(io::read_file(dir / "cache" / "synth_00011.wtf"));
  }
  if (problem.empty()) {
    const bool same = checkpoints[0] == checkpoints[1] && reports[0] == reports[1] && features[0] == features[1];
    report(same, "determinism",
           std::string("synth -> featurize -> train(5 epochs) -> eval twice: checkpoints ") +
               (checkpoints[0] == checkpoints[1] ? "identical" : "DIFFER") + " (" +
               std::to_string(checkpoints[0].size()) + " bytes), reports " +
               (reports[0] == reports[1] ? "identical" : "DIFFER") + ", cached features " +
               (features[0] == features[1] ? "identical" : "DIFFER"));
  } else {
    report(false, "determinism", problem);
  }
  std::error_code ec;
  fs::remove_all(root, ec);
}

// ---------------------------------------------------------------------------
// Desk-scale synthetic experiment

constexpr std::size_t kDeskMaxEpochs = 50;

void desk_scale() {
  SynthConfig sc;
  sc.clips = 200;
  sc.tags = 3;
  sc.seed = 2016;
  const auto synth = synth_generate(sc);
  const auto data = featurize_synth(synth);
  auto [train_set, held_out] = split_fold(data, 5);
  auto [inner_train, inner_val] = split_fold(train_set, 4);
  info("desk-scale data", std::to_string(train_set.size()) + " training clips (folds 1-4), " +
                              std::to_string(held_out.size()) + " held-out clips (fold 5), tags abc; epoch count "
                              "picked on fold 4 after training on folds 1-3");

  TrainConfig cfg;
  cfg.batch_size = 8;
  cfg.seed = 11;
  cfg.adam.learning_rate = 2e-4;

  std::optional<Tagger> jdc;
  for (auto kind : {ModelKind::bob, ModelKind::jdc}) {
    ModelSpec spec;
    spec.kind = kind;
    spec.num_tags = 3;
    const auto start = std::chrono::steady_clock::now();
    // Early stopping: the first epoch reaching the lowest inner-validation EER.
    cfg.epochs = kDeskMaxEpochs;
    const auto inner = train(spec, synth.index.vocabulary, inner_train, cfg, &inner_val).history;
    std::size_t best = 1;
    for (const auto& r : inner)
      if (*r.val_eer < *inner[best - 1].val_eer) best = r.epoch;
    cfg.epochs = best;
    auto result = train(spec, synth.index.vocabulary, train_set, cfg);
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    const auto eer = evaluate_tagger(result.model, held_out);
    std::string per_tag;
    for (const auto& t : eer.tags) per_tag += " " + t.tag + "=" + (t.eer ? num(*t.eer) : "skipped");
    const bool ok = eer.mean && *eer.mean <= 0.05;
    report(ok, "desk-scale " + std::string(to_string(kind)) + " held-out EER",
           "mean " + (eer.mean ? num(*eer.mean) : "undefined") + " (target <= 0.05), per tag" + per_tag + "; " +
               std::to_string(best) + " epochs (inner validation EER " + num(*inner[best - 1].val_eer) +
               "), batch 8, lr 2e-4, final loss " + num(result.history.back().train_loss) + ", " +
               num(std::round(secs)) + " s");
    if (kind == ModelKind::jdc) jdc = std::move(result.model);
  }

  std::vector<EventAnnotation> anns;
  for (const auto& a : synth.annotations)
    if (std::any_of(held_out.begin(), held_out.end(), [&](const auto& c) { return c.id == a.clip_id; }))
      anns.push_back(a);
  const auto product = localization_score(*jdc, held_out, anns, SaliencyMap::product);
  bool ok = true;
  std::string detail;
  for (const auto& row : product) {
    ok = ok && row.auc && *row.auc >= 0.80;
    detail += " " + row.tag + "=" + (row.auc ? num(*row.auc) : "n/a") + " (" + std::to_string(row.clips) + " clips)";
  }
  report(ok, "desk-scale JDC localization AUC", "w_norm*y vs event mask, per tag" + detail + " (target >= 0.80)");

  const auto learned = localization_score(*jdc, held_out, anns, SaliencyMap::detector);
  std::string learned_detail;
  for (const auto& row : learned) learned_detail += " " + row.tag + "=" + (row.auc ? num(*row.auc) : "n/a");
  info("desk-scale learned detector AUC", "w_norm alone, per tag" + learned_detail);

  const auto flat = with_constant_detector(*jdc);
  const auto ablation = localization_score(flat, held_out, anns, SaliencyMap::detector);
  bool near_half = true;
  std::string ablation_detail;
  for (const auto& row : ablation) {
    near_half = near_half && row.auc && std::abs(*row.auc - 0.5) <= 0.02;
    ablation_detail += " " + row.tag + "=" + (row.auc ? num(*row.auc) : "n/a");
  }
  report(near_half, "desk-scale constant-detector ablation",
         "detector map of the ablated model, per tag" + ablation_detail + " (target 0.5 +- 0.02)");
  const auto flat_product = localization_score(flat, held_out, anns, SaliencyMap::product);
  std::string fp;
  for (const auto& row : flat_product) fp += " " + row.tag + "=" + (row.auc ? num(*row.auc) : "n/a");
  info("desk-scale constant-detector product AUC",
       "w_norm*y with uniform w_norm ranks blocks by y alone, per tag" + fp);
}

// ---------------------------------------------------------------------------
// CHiME-Home comparison (needs user-supplied data)

std::size_t env_size(const char* name, std::size_t fallback) {
  const char* v = std::getenv(name);
  return v ? static_cast<std::size_t>(std::stoul(v)) : fallback;
}

void chime_table() {
  const char* dir = std::getenv("WEAKTAG_CHIME_DIR");
  if (dir == nullptr) {
    std::cout << "SKIP CHiME-Home EER table: set WEAKTAG_CHIME_DIR to a dataset directory "
                 "(index.csv, audio/) to run it" << std::endl;
    return;
  }
  LoadOptions opt;
  opt.threads = env_size("WEAKTAG_THREADS", 1);
  if (const char* cache = std::getenv("WEAKTAG_CACHE")) opt.cache_dir = fs::path(cache) / "chime";
  if (opt.cache_dir) fs::create_directories(*opt.cache_dir);
  if (const char* ex = std::getenv("WEAKTAG_CHIME_EXCLUDE"))
    for (char c : std::string(ex)) opt.exclude_tags.emplace_back(1, c);
  opt.split = Split::development;
  const auto dev = load_dataset(dir, opt);
  opt.split = Split::evaluation;
  const auto eval = load_dataset(dir, opt);

  TrainConfig cfg;
  cfg.epochs = env_size("WEAKTAG_CHIME_EPOCHS", 50);
  cfg.batch_size = env_size("WEAKTAG_CHIME_BATCH", 32);
  cfg.adam.learning_rate = 2e-4;
  cfg.threads = opt.threads;

  struct Row {
    double dev = 0, eval = 0;
  };
  std::map<ModelKind, Row> rows;
  for (auto kind : {ModelKind::bob, ModelKind::jdc}) {
    ModelSpec spec;
    spec.kind = kind;
    spec.num_tags = dev.vocabulary.size();
    const auto cv = cross_validate(spec, dev.vocabulary, dev.clips, cfg, 5);
    const auto model = train(spec, dev.vocabulary, dev.clips, cfg).model;
    const auto e = evaluate_tagger(model, eval.clips, EerPooling::per_tag, opt.threads);
    rows[kind] = {cv.mean_eer.value_or(1.0), e.mean.value_or(1.0)};
  }
  const auto near = [](double got, double want) { return std::abs(got - want) <= 0.03; };
  const bool ok = near(rows[ModelKind::bob].dev, 0.167) && near(rows[ModelKind::jdc].dev, 0.173) &&
                  near(rows[ModelKind::bob].eval, 0.190) && near(rows[ModelKind::jdc].eval, 0.169) &&
                  rows[ModelKind::jdc].eval < rows[ModelKind::bob].eval;
  report(ok, "CHiME-Home EER table",
         "dev BOB " + num(rows[ModelKind::bob].dev) + " (0.167), JDC " + num(rows[ModelKind::jdc].dev) +
             " (0.173); eval BOB " + num(rows[ModelKind::bob].eval) + " (0.190), JDC " +
             num(rows[ModelKind::jdc].eval) + " (0.169); tolerance 0.03, JDC must beat BOB on eval");
}

}  // namespace

int main() {
  try {
    const auto start = std::chrono::steady_clock::now();
    gradient_check();
    row_stochasticity();
    bob_reduction();
    scale_invariance();
    eer_oracle();
    dft_oracle();
    determinism();
    info("property suite time",
         num(std::round(std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count())) + " s");
    desk_scale();
    chime_table();
  } catch (const std::exception& e) {
    std::cout << "FAIL acceptance run aborted: " << e.what() << std::endl;
    return 1;
  }
  std::cout << (failures == 0 ? "all acceptance criteria met" : std::to_string(failures) + " criteria failed")
            << std::endl;
  return failures == 0 ? 0 : 1;
}
