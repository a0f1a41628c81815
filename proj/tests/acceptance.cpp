// Acceptance suite: one PASS/FAIL line per criterion, non-zero exit if any fail.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <string>

#include "oracles.hpp"
#include "pedcc/pedcc.hpp"

using namespace pedcc;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

int failures = 0;

void report(const char* id, bool ok, const std::string& detail) {
  std::printf("%s %s  %s\n", id, ok ? "PASS" : "FAIL", detail.c_str());
  std::fflush(stdout);
  if (!ok) ++failures;
}

std::string fmt(const char* f, double a, double b = 0, double c = 0, double d = 0) {
  char buf[256];
  std::snprintf(buf, sizeof buf, f, a, b, c, d);
  return buf;
}

// Riesz energy recomputed from scratch, independent of the generator.
double brute_energy(const Matrix& p, double k) {
  double e = 0.0;
  for (std::size_t i = 0; i < p.rows(); ++i)
    for (std::size_t j = i + 1; j < p.rows(); ++j) {
      double d2 = 0.0;
      for (std::size_t t = 0; t < p.cols(); ++t) d2 += (p(i, t) - p(j, t)) * (p(i, t) - p(j, t));
      e += std::pow(std::sqrt(d2), -k);
    }
  return e;
}

void a1() {
  bool ok = true;
  std::string detail;
  for (auto [c, d] : std::vector<std::pair<std::size_t, std::size_t>>{{2, 8}, {3, 2}, {4, 3}, {9, 8}}) {
    const auto t0 = Clock::now();
    const CentroidSet cs = generate(c, d, 1);
    const double secs = seconds_since(t0);
    const double target = -1.0 / static_cast<double>(c - 1);
    double gap = 0.0;
    for (std::size_t i = 0; i < c; ++i)
      for (std::size_t j = i + 1; j < c; ++j)
        gap = std::max(gap, std::abs(oracle::dot(oracle::row(cs.centers, i), oracle::row(cs.centers, j)) - target));
    ok = ok && gap <= 5e-3 && secs < 10.0;
    detail += fmt("(%g,%g) gap %.2e %.2fs; ", static_cast<double>(c), static_cast<double>(d), gap, secs);
  }
  report("A1", ok, "simplex cosines within 5e-3, <10 s each: " + detail);
}

void a2() {
  const auto t0 = Clock::now();
  double worst_norm = 0.0, previous = INFINITY, worst_rise = 0.0;
  std::size_t steps = 0;
  bool rose = false;
  generate_detailed(20, 3, 1, GenConfig{}, [&](const GenTrace& t) {
    for (std::size_t r = 0; r < t.points.rows(); ++r) {
      double n2 = 0.0;
      for (double v : t.points.row(r)) n2 += v * v;
      worst_norm = std::max(worst_norm, std::abs(std::sqrt(n2) - 1.0));
    }
    const double e = brute_energy(t.points, 1.0);
    if (e > previous) {
      rose = true;
      worst_rise = std::max(worst_rise, e - previous);
    }
    previous = e;
    ++steps;
  });
  const double secs = seconds_since(t0);
  report("A2", worst_norm <= 1e-12 && !rose && secs < 10.0,
         fmt("c=20 d=3: %g accepted steps, max |norm-1| %.2e, largest energy increase %.2e, %.2fs",
             static_cast<double>(steps), worst_norm, worst_rise, secs));
}

struct Instance {
  FeatureBatch batch;
  Matrix weights;
  CentroidSet centroids;
  MarginConfig margin;
};

Instance random_instance(Rng& rng, bool angular) {
  const std::size_t n = 1 + rng.below(8), c = 2 + rng.below(9), d = 2 + rng.below(15);
  Instance in;
  in.batch.features = gaussian_matrix(rng, n, d);
  for (std::size_t i = 0; i < n; ++i) in.batch.labels.push_back(rng.below(c));
  in.weights = gaussian_matrix(rng, c, d);
  in.centroids.centers = l2_normalize_rows(in.weights);
  in.centroids.num_classes = c;
  in.centroids.dim = d;
  in.margin.scale_s = 1.0 + 29.0 * rng.uniform();
  in.margin.margin_m = 0.6 * rng.uniform();
  in.margin.margin_mode = angular ? MarginMode::additive_angular : MarginMode::additive_cosine;
  return in;
}

Matrix cosine_logits(const Instance& in) {
  Matrix z = matmul_transposed(l2_normalize_rows(in.batch.features), l2_normalize_rows(in.weights));
  const double s = in.margin.scale_s, m = in.margin.margin_m;
  for (std::size_t i = 0; i < z.rows(); ++i) {
    for (std::size_t j = 0; j < z.cols(); ++j) z(i, j) *= s;
    const double cy = z(i, in.batch.labels[i]) / s;
    z(i, in.batch.labels[i]) =
        in.margin.margin_mode == MarginMode::additive_angular ? s * std::cos(std::acos(cy) + m) : s * (cy - m);
  }
  return z;
}

double fd_error(const FeatureBatch& b, const LossClosure& f) {
  const auto analytic = f(b).grad_features;
  const std::vector<double> x(b.features.data().begin(), b.features.data().end());
  const auto numeric = oracle::central_difference(
      [&](const std::vector<double>& v) {
        return f(FeatureBatch{Matrix(b.features.rows(), b.features.cols(), v), b.labels}).value;
      },
      x, 1e-5);
  return oracle::max_rel_error({analytic.data().begin(), analytic.data().end()}, numeric);
}

void a3() {
  const auto t0 = Clock::now();
  struct Case {
    const char* name;
    int root;  // 0: not a root case
  };
  const std::vector<Case> cases{{"softmax_ce", 0}, {"am_softmax", 0}, {"pedcc_am", 0}, {"pedcc_mse", 0},
                                {"pedcc_loss_n1", 1}, {"pedcc_loss_n2", 2}, {"pedcc_loss_n3", 3}};
  bool ok = true;
  std::string detail;
  Rng rng(2024);
  for (const auto& cs : cases) {
    double worst = 0.0;
    std::size_t passed = 0, rejected = 0, count = 0;
    while (count < 100) {
      const Instance in = random_instance(rng, count % 2 == 1 && std::strcmp(cs.name, "softmax_ce") != 0);
      const bool uses_softmax = std::strcmp(cs.name, "pedcc_mse") != 0;
      if (uses_softmax) {
        const Matrix logits = std::strcmp(cs.name, "softmax_ce") == 0 ? matmul_transposed(in.batch.features, in.weights)
                                                                    : cosine_logits(in);
        if (oracle::max_target_probability(logits, in.batch.labels) > 1.0 - 1e-5) {
          ++rejected;
          continue;
        }
      }
      if (cs.root > 0 && pedcc_mse(in.batch, in.centroids).value < 1e-6) {
        ++rejected;
        continue;
      }
      ++count;
      LossClosure f;
      if (std::strcmp(cs.name, "softmax_ce") == 0)
        f = [&](const FeatureBatch& b) { return softmax_ce(b, in.weights); };
      else if (std::strcmp(cs.name, "am_softmax") == 0)
        f = [&](const FeatureBatch& b) { return am_softmax(b, in.weights, in.margin); };
      else if (std::strcmp(cs.name, "pedcc_am") == 0)
        f = [&](const FeatureBatch& b) { return pedcc_am(b, in.centroids, in.margin); };
      else if (std::strcmp(cs.name, "pedcc_mse") == 0)
        f = [&](const FeatureBatch& b) { return pedcc_mse(b, in.centroids); };
      else
        f = [&](const FeatureBatch& b) { return pedcc_loss(b, in.centroids, {in.margin, cs.root}); };
      const double e = fd_error(in.batch, f);
      worst = std::max(worst, e);
      passed += e < 1e-4;
    }
    ok = ok && passed == 100;
    detail += std::string(cs.name) + fmt(" %g/100 worst %.1e skipped %g; ", static_cast<double>(passed), worst,
                                         static_cast<double>(rejected));
  }
  const double secs = seconds_since(t0);
  ok = ok && secs < 30.0;
  report("A3", ok, detail + fmt("%.2fs", secs));
}

void a4() {
  Rng rng(77);
  double worst_reduction = 0.0;
  bool exact = true, plain_sum = true;
  for (int trial = 0; trial < 200; ++trial) {
    Instance in = random_instance(rng, false);
    const double am = am_softmax(in.batch, in.weights, {1.0, 0.0}).value;
    const double ce =
        softmax_ce({l2_normalize_rows(in.batch.features), in.batch.labels}, l2_normalize_rows(in.weights)).value;
    worst_reduction = std::max(worst_reduction, std::abs(am - ce));
    for (int n : {1, 2, 3}) {
      const double pam = pedcc_am(in.batch, in.centroids, in.margin).value;
      const double mse = pedcc_mse(in.batch, in.centroids).value;
      const double total = pedcc_loss(in.batch, in.centroids, {in.margin, n}).value;
      exact = exact && total == pam + std::pow(mse, 1.0 / n);
      if (n == 1) plain_sum = plain_sum && total == pam + mse;
    }
  }
  report("A4", worst_reduction <= 1e-9 && exact && plain_sum,
         fmt("am(s=1,m=0) vs softmax on cosine logits max diff %.2e; composition exact %g; n=1 plain sum %g",
             worst_reduction, exact, plain_sum));
}

struct DeskRun {
  LabeledDataset train, eval;
  CentroidSet centroids;
  MlpModel init;
};

constexpr std::uint64_t kSeed = 1;

DeskRun desk_setup() {
  Rng data_rng(kSeed);
  auto [tr, ev] = split_per_class(synth_blobs(data_rng, 5, 600, 20, 2.0, 1.0), 500);
  Rng init_rng(kSeed ^ 0x5bd1e995ULL);
  return {tr, ev, generate(5, 16, kSeed), MlpModel::init({20, 64, 16}, Activation::relu, init_rng)};
}

TrainPlan desk_plan(LossKind kind) {
  TrainPlan p;  // 50 epochs, lr 0.1, momentum 0.9, weight decay 5e-4
  p.loss.kind = kind;
  p.loss.margin = {30.0, 0.5};
  p.loss.root_n = 1;
  p.seed = kSeed;
  return p;
}

struct FeatureScores {
  double accuracy, mean_cos, scatter_ratio;
};

FeatureScores score(const Matrix& features, const LabeledDataset& ds, const Matrix& references) {
  const auto r = evaluate_features(features, ds.labels, references);
  const auto sc = scatter_metrics(l2_normalize_rows(features), ds.labels, ds.num_classes);
  return {r.nearest_centroid_accuracy, r.mean_cos_to_own_centroid, sc.ratio()};
}

void a5_to_a7() {
  const DeskRun run = desk_setup();

  auto t0 = Clock::now();
  const auto pedcc_run = train(run.init, run.train, &run.eval, run.centroids, desk_plan(LossKind::pedcc));
  const double pedcc_secs = seconds_since(t0);
  const Matrix pf = extract_features(pedcc_run.model, run.eval.inputs);
  const FeatureScores ps = score(pf, run.eval, pedcc_run.centroids.centers);
  report("A5", ps.accuracy >= 0.99 && ps.mean_cos >= 0.95 && pedcc_secs < 60.0,
         fmt("eval nearest-centroid acc %.4f (>= 0.99), mean cos %.4f (>= 0.95), %.2fs (< 60)", ps.accuracy,
             ps.mean_cos, pedcc_secs));

  const auto softmax_run = train(run.init, run.train, &run.eval, run.centroids, desk_plan(LossKind::softmax));
  const Matrix sf = extract_features(softmax_run.model, run.eval.inputs);
  const FeatureScores ss = score(sf, run.eval, class_mean_directions(sf, run.eval.labels, run.eval.num_classes));
  report("A6", ps.mean_cos > ss.mean_cos && ps.scatter_ratio < ss.scatter_ratio,
         fmt("mean cos pedcc %.4f vs softmax %.4f; within/between pedcc %.4e vs softmax %.4e", ps.mean_cos, ss.mean_cos,
             ps.scatter_ratio, ss.scatter_ratio));

  const bool frozen = pedcc_run.centroids == run.centroids;
  TrainPlan ft = desk_plan(LossKind::pedcc);
  ft.finetune_epoch = 30;
  ft.finetune_lr = 1e-3;
  double worst_norm = 0.0, max_drift = 0.0;
  const auto ft_run = train(run.init, run.train, &run.eval, run.centroids, ft, [&](const EpochRecord& rec, const CentroidSet& cs) {
    for (std::size_t j = 0; j < cs.centers.rows(); ++j)
      worst_norm = std::max(worst_norm, std::abs(norm(cs.centers.row(j)) - 1.0));
    for (double a : rec.centroid_drift_deg) max_drift = std::max(max_drift, a);
  });
  const FeatureScores fs = score(extract_features(ft_run.model, run.eval.inputs), run.eval, ft_run.centroids.centers);
  report("A7", frozen && worst_norm <= 1e-9 && fs.accuracy >= ps.accuracy - 0.005,
         fmt("frozen run bit-identical %g; fine-tune max |norm-1| %.2e, max drift %.3f deg, acc %.4f",
             frozen, worst_norm, max_drift, fs.accuracy) +
             fmt(" (A5 %.4f)", ps.accuracy));
}

std::string be32(std::uint32_t v) {
  return {static_cast<char>(v >> 24), static_cast<char>(v >> 16), static_cast<char>(v >> 8), static_cast<char>(v)};
}

void a8() {
  bool json_ok = true;
  for (auto [c, d] : std::vector<std::pair<std::size_t, std::size_t>>{{4, 3}, {5, 16}, {47, 64}}) {
    const CentroidSet cs = generate(c, d, 3);
    const CentroidSet back = centroids_from_json(centroids_to_json(cs));
    json_ok = json_ok && back == cs &&
              std::memcmp(back.centers.data().data(), cs.centers.data().data(), cs.centers.size() * sizeof(double)) == 0;
  }

  std::string images{'\0', '\0', '\x08', '\x03'};
  images += be32(2) + be32(2) + be32(2);
  for (int p : {0, 255, 51, 102, 1, 2, 3, 254}) images.push_back(static_cast<char>(p));
  std::string labels{'\0', '\0', '\x08', '\x01'};
  labels += be32(2);
  labels += std::string{'\x05', '\x00'};
  const auto idx = parse_idx(images, labels);
  const std::vector<double> expected{0.0, 1.0, 0.2, 0.4, 1.0 / 255, 2.0 / 255, 3.0 / 255, 254.0 / 255};
  const bool idx_ok = std::vector<double>(idx.inputs.data().begin(), idx.inputs.data().end()) == expected &&
                      idx.labels == std::vector<std::size_t>{5, 0};

  Rng rng(8);
  LabeledDataset ds{gaussian_matrix(rng, 50, 7), {}, 4, Split::train};
  for (std::size_t i = 0; i < 50; ++i) ds.labels.push_back(i % 4);
  for (double& v : ds.inputs.data()) v *= std::pow(10.0, static_cast<int>(rng.below(40)) - 20);
  const bool csv_ok = parse_csv(dataset_to_csv(ds)).data == ds;

  report("A8", json_ok && idx_ok && csv_ok,
         fmt("centroid JSON bit-exact %g; IDX fixture exact %g; CSV exact %g", json_ok, idx_ok, csv_ok));
}

void a9() {
  std::printf("A9 NOT REPRODUCED AT DESK SCALE  published: EMNIST 89.83%%, CIFAR100 72.66%%, LFW 93.36%% "
              "(VGG/ResNet18-scale runs; A1-A8 substitute)\n");
  const char* env = std::getenv("PEDCC_EMNIST_DIR");
  const std::filesystem::path dir = env ? env : "data/emnist";
  const auto tri = dir / "emnist-balanced-train-images-idx3-ubyte", trl = dir / "emnist-balanced-train-labels-idx1-ubyte";
  const auto tei = dir / "emnist-balanced-test-images-idx3-ubyte", tel = dir / "emnist-balanced-test-labels-idx1-ubyte";
  if (!std::filesystem::exists(tri) || !std::filesystem::exists(trl) || !std::filesystem::exists(tei) ||
      !std::filesystem::exists(tel)) {
    std::printf("A9 SKIP  optional EMNIST smoke run: balanced IDX files not found under %s (set PEDCC_EMNIST_DIR)\n",
                dir.string().c_str());
    return;
  }
  const auto train_set = load_idx(tri.string(), trl.string(), 4000, 47);
  auto eval_set = load_idx(tei.string(), tel.string(), 4000, 47);
  eval_set.split = Split::eval;
  Rng init_rng(kSeed);
  const MlpModel model = MlpModel::init({784, 256, 64}, Activation::relu, init_rng);
  TrainPlan plan = desk_plan(LossKind::pedcc);
  plan.epochs = 10;
  const auto r = train(model, train_set, &eval_set, generate(47, 64, kSeed), plan);
  bool decreasing = true;
  for (std::size_t e = 1; e < 5; ++e) decreasing = decreasing && r.log.epochs[e].loss < r.log.epochs[e - 1].loss;
  const double acc = r.log.epochs.back().eval_acc;
  report("A9", decreasing && acc > 3.0 / 47.0,
         fmt("EMNIST smoke: loss strictly decreasing over epochs 1-5 %g; eval acc %.4f (> %.4f)", decreasing, acc,
             3.0 / 47.0));
}

}  // namespace

int main() {
  a1();
  a2();
  a3();
  a4();
  a5_to_a7();
  a8();
  a9();
  std::printf("%s: %d criterion failure(s)\n", failures ? "FAILED" : "ALL PASSED", failures);
  return failures ? 1 : 0;
}
