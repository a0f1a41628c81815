#pragma once

// Command-line front end. Exit codes: 0 success, 1 runtime or numeric
// failure, 2 usage error.

#include <filesystem>
#include <iomanip>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "pedcc/pedcc.hpp"

namespace pedcc::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitRuntime = 1;
inline constexpr int kExitUsage = 2;

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct SynthSpec {
  std::size_t classes = 5;
  std::size_t train_per_class = 500;
  std::size_t eval_per_class = 100;
  std::size_t dim = 20;
  double scale = 2.0;
  double noise = 1.0;
  std::uint64_t seed = 1;
};

/// "classes=5,train=500,eval=100,dim=20,scale=2,noise=1,seed=1"; omitted keys
/// keep their defaults.
inline SynthSpec parse_synth_spec(const std::string& text) {
  SynthSpec s;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    const auto eq = item.find('=');
    if (eq == std::string::npos) throw UsageError("--synth entry '" + item + "' is not key=value");
    const std::string key = item.substr(0, eq);
    const std::string val = item.substr(eq + 1);
    try {
      if (key == "classes") s.classes = std::stoul(val);
      else if (key == "train") s.train_per_class = std::stoul(val);
      else if (key == "eval") s.eval_per_class = std::stoul(val);
      else if (key == "dim") s.dim = std::stoul(val);
      else if (key == "scale") s.scale = std::stod(val);
      else if (key == "noise") s.noise = std::stod(val);
      else if (key == "seed") s.seed = std::stoull(val);
      else throw UsageError("unknown --synth key '" + key + "'");
    } catch (const std::logic_error&) {
      throw UsageError("--synth value for '" + key + "' is not a number");
    }
  }
  if (s.classes < 1 || s.train_per_class < 1 || s.dim < 1) throw UsageError("--synth counts must be >= 1");
  return s;
}

inline std::pair<LabeledDataset, LabeledDataset> make_synth(const SynthSpec& s) {
  Rng rng(s.seed);
  const auto all = synth_blobs(rng, s.classes, s.train_per_class + s.eval_per_class, s.dim, s.scale, s.noise);
  return split_per_class(all, s.train_per_class);
}

inline void require_file(const std::string& path, const std::string& flag) {
  if (!std::filesystem::is_regular_file(path)) throw UsageError(flag + ": file not found: " + path);
}

inline void require_writable_parent(const std::string& path, const std::string& flag) {
  const auto parent = std::filesystem::path(path).parent_path();
  if (!parent.empty() && !std::filesystem::is_directory(parent))
    throw UsageError(flag + ": directory does not exist: " + parent.string());
}

inline void print_summary(std::ostream& out, const CentroidSummary& s) {
  double worst_norm = 0.0;
  for (double n : s.row_norms) worst_norm = std::max(worst_norm, std::abs(n - 1.0));
  out << std::setprecision(10) << "classes " << s.num_classes << "  dim " << s.dim << "\n"
      << "min_angle_deg " << s.min_angle_deg << "\n"
      << "mean_angle_deg " << s.mean_angle_deg << "\n"
      << "max_angle_deg " << s.max_angle_deg << "\n"
      << "energy " << s.energy << "\n"
      << "iterations " << s.iterations_run << (s.converged ? "" : "  (max_iterations reached)") << "\n"
      << "max_row_norm_error " << worst_norm << "\n";
}

struct DataArgs {
  std::string data_path;
  std::string eval_path;
  std::string synth;
  std::string label_column = "label";
};

inline void add_data_flags(CLI::App& cmd, DataArgs& a) {
  cmd.add_option("--data", a.data_path, "CSV dataset with a header row");
  cmd.add_option("--synth", a.synth, "synthetic blobs, e.g. classes=5,train=500,eval=100,dim=20,scale=2,noise=1,seed=1");
  cmd.add_option("--label-column", a.label_column, "label column name in CSV files");
}

/// Loads (train, eval) splits. For --data the file is the primary split and
/// --eval-data, when given, the secondary one.
inline std::pair<LabeledDataset, std::optional<LabeledDataset>> load_data(const DataArgs& a) {
  if (a.data_path.empty() == a.synth.empty()) throw UsageError("exactly one of --data or --synth is required");
  if (!a.synth.empty()) {
    auto [tr, ev] = make_synth(parse_synth_spec(a.synth));
    return {std::move(tr), std::move(ev)};
  }
  require_file(a.data_path, "--data");
  CsvOptions opt;
  opt.label_column = a.label_column;
  auto primary = load_csv(a.data_path, opt).data;
  std::optional<LabeledDataset> secondary;
  if (!a.eval_path.empty()) {
    require_file(a.eval_path, "--eval-data");
    opt.split = Split::eval;
    secondary = load_csv(a.eval_path, opt).data;
    const std::size_t c = std::max(primary.num_classes, secondary->num_classes);
    primary.num_classes = secondary->num_classes = c;
  }
  return {std::move(primary), std::move(secondary)};
}

inline std::vector<std::size_t> parse_widths(const std::string& text) {
  std::vector<std::size_t> out;
  if (text.empty()) return out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      out.push_back(std::stoul(item));
    } catch (const std::logic_error&) {
      throw UsageError("--hidden expects comma-separated widths");
    }
    if (out.back() == 0) throw UsageError("--hidden widths must be positive");
  }
  return out;
}

inline int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Evenly distributed class centroids and fixed-centroid margin losses"};
  app.require_subcommand(1);

  // generate / inspect
  std::size_t classes = 0, dim = 0;
  std::uint64_t seed = 0;
  std::string out_path, centroids_path;
  GenConfig gen;
  auto* generate_cmd = app.add_subcommand("generate", "generate evenly distributed centroids");
  generate_cmd->add_option("--classes", classes, "number of classes c (>= 2)")->required();
  generate_cmd->add_option("--dim", dim, "feature dimension d (>= 2)")->required();
  generate_cmd->add_option("--seed", seed, "random seed")->required();
  generate_cmd->add_option("--out", out_path, "output centroid JSON")->required();
  generate_cmd->add_option("--force-exponent", gen.force_exponent, "energy exponent k");
  generate_cmd->add_option("--max-iters", gen.max_iterations, "iteration cap");
  generate_cmd->add_option("--tol", gen.convergence_tol, "max per-point displacement at convergence");
  generate_cmd->add_option("--step", gen.step_size, "initial step size");

  auto* inspect_cmd = app.add_subcommand("inspect", "summarise a centroid file");
  inspect_cmd->add_option("--centroids", centroids_path, "centroid JSON")->required();

  // train
  DataArgs data_args;
  std::string loss_name = "pedcc", log_path, model_out, centroids_out, hidden = "64", activation = "relu",
              margin_mode = "cosine";
  std::size_t feat_dim = 16;
  std::optional<std::size_t> finetune_epoch;
  TrainPlan plan;
  auto* train_cmd = app.add_subcommand("train", "train an MLP feature extractor");
  add_data_flags(*train_cmd, data_args);
  train_cmd->add_option("--eval-data", data_args.eval_path, "CSV evaluation split (with --data)");
  train_cmd->add_option("--centroids", centroids_path, "centroid JSON (required for --loss pedcc)");
  train_cmd->add_option("--loss", loss_name, "softmax | am | center | pedcc")
      ->check(CLI::IsMember({"softmax", "am", "center", "pedcc"}));
  train_cmd->add_option("--m", plan.loss.margin.margin_m, "margin m");
  train_cmd->add_option("--s", plan.loss.margin.scale_s, "scale s");
  train_cmd->add_option("--n", plan.loss.root_n, "root factor n (>= 1)");
  train_cmd->add_option("--margin-mode", margin_mode, "cosine | angular")->check(CLI::IsMember({"cosine", "angular"}));
  train_cmd->add_option("--epochs", plan.epochs, "epochs");
  train_cmd->add_option("--batch", plan.batch_size, "batch size");
  train_cmd->add_option("--lr", plan.learning_rate, "learning rate");
  train_cmd->add_option("--momentum", plan.momentum, "SGD momentum");
  train_cmd->add_option("--wd", plan.weight_decay, "weight decay on network weights");
  train_cmd->add_option("--finetune-epoch", finetune_epoch, "fine-tune centroids after this many epochs");
  train_cmd->add_option("--finetune-lr", plan.finetune_lr, "centroid fine-tuning learning rate");
  train_cmd->add_option("--seed", plan.seed, "seed for initialisation and shuffling");
  train_cmd->add_option("--hidden", hidden, "comma-separated hidden widths");
  train_cmd->add_option("--activation", activation, "relu | tanh")->check(CLI::IsMember({"relu", "tanh"}));
  train_cmd->add_option("--feat-dim", feat_dim, "feature dimension when no centroid file is given");
  train_cmd->add_option("--log", log_path, "training log CSV");
  train_cmd->add_option("--model-out", model_out, "trained model JSON");
  train_cmd->add_option("--centroids-out", centroids_out, "centroids after fine-tuning");

  // eval
  std::string model_path, pairs_path;
  DataArgs eval_args;
  auto* eval_cmd = app.add_subcommand("eval", "evaluate a trained model");
  eval_cmd->add_option("--model", model_path, "model JSON")->required();
  add_data_flags(*eval_cmd, eval_args);
  eval_cmd->add_option("--centroids", centroids_path, "centroid JSON")->required();
  eval_cmd->add_option("--pairs", pairs_path, "pair list CSV (index_a,index_b,same)");

  // export-plot
  std::string projection = "first3";
  DataArgs plot_args;
  auto* plot_cmd = app.add_subcommand("export-plot", "write 3-D plot coordinates as CSV");
  plot_cmd->add_option("--centroids", centroids_path, "centroid JSON to export");
  plot_cmd->add_option("--model", model_path, "model JSON whose features are exported");
  add_data_flags(*plot_cmd, plot_args);
  plot_cmd->add_option("--project", projection, "first3 | pca3")->check(CLI::IsMember({"first3", "pca3"}));
  plot_cmd->add_option("--out", out_path, "output CSV")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp& e) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  }

  try {
    if (*generate_cmd) {
      if (classes < 2) throw UsageError("--classes must satisfy c >= 2 (got " + std::to_string(classes) + ")");
      if (dim < 2) throw UsageError("--dim must satisfy d >= 2 (got " + std::to_string(dim) + ")");
      try {
        gen.validate();
      } catch (const Error& e) {
        throw UsageError(e.what());
      }
      require_writable_parent(out_path, "--out");
      auto outcome = generate_detailed(classes, dim, seed, gen);
      validate_centroid_set(outcome.centroids);
      write_centroids(outcome.centroids, out_path);
      print_summary(out, inspect(outcome.centroids));
      out << "termination " << termination_name(outcome.termination) << "\n";
      if (!outcome.centroids.converged) err << "warning: generation stopped at max_iterations\n";
      return kExitOk;
    }

    if (*inspect_cmd) {
      require_file(centroids_path, "--centroids");
      print_summary(out, inspect(read_centroids(centroids_path)));
      return kExitOk;
    }

    if (*train_cmd) {
      plan.loss.kind = parse_loss_kind(loss_name);
      plan.loss.margin.margin_mode =
          margin_mode == "angular" ? MarginMode::additive_angular : MarginMode::additive_cosine;
      plan.finetune_epoch = finetune_epoch;
      if (plan.loss.kind == LossKind::pedcc && centroids_path.empty())
        throw UsageError("--loss pedcc requires --centroids");
      try {
        plan.validate();
      } catch (const Error& e) {
        throw UsageError(e.what());
      }
      if (!log_path.empty()) require_writable_parent(log_path, "--log");
      if (!model_out.empty()) require_writable_parent(model_out, "--model-out");
      if (!centroids_out.empty()) require_writable_parent(centroids_out, "--centroids-out");
      if (!centroids_path.empty()) require_file(centroids_path, "--centroids");
      auto [train_data, eval_data] = load_data(data_args);

      CentroidSet centroids;
      if (!centroids_path.empty()) {
        centroids = read_centroids(centroids_path);
      } else {
        // Baselines score against their own classifier; the set only fixes the shape.
        centroids = generate(std::max<std::size_t>(train_data.num_classes, 2), std::max<std::size_t>(feat_dim, 2),
                             plan.seed);
      }
      std::vector<std::size_t> widths{train_data.inputs.cols()};
      for (std::size_t w : parse_widths(hidden)) widths.push_back(w);
      widths.push_back(centroids.dim);
      Rng init_rng(plan.seed ^ 0x5bd1e995ULL);
      MlpModel model = MlpModel::init(widths, parse_activation(activation), init_rng);

      const LabeledDataset* eval_ptr = eval_data ? &*eval_data : nullptr;
      TrainResult result;
      try {
        result = train(std::move(model), train_data, eval_ptr, centroids, plan);
      } catch (const NonFiniteLossError& e) {
        if (!log_path.empty()) write_file(log_path, train_log_to_csv(e.partial_log()));
        err << "error: non-finite loss at epoch " << e.epoch() << "\n";
        return kExitRuntime;
      }
      if (!log_path.empty()) write_file(log_path, train_log_to_csv(result.log));
      if (!model_out.empty()) write_model({result.model, plan.loss.kind, result.head}, model_out);
      if (!centroids_out.empty()) write_centroids(result.centroids, centroids_out);
      if (!result.log.epochs.empty()) {
        const auto& last = result.log.epochs.back();
        out << std::setprecision(6) << "epoch " << last.epoch << "  loss " << last.loss << "  train_acc "
            << last.train_acc << "  eval_acc " << last.eval_acc << "  mean_cos " << last.mean_cos << "\n";
      } else {
        out << "no epochs run; model holds its initial weights\n";
      }
      return kExitOk;
    }

    if (*eval_cmd) {
      require_file(model_path, "--model");
      require_file(centroids_path, "--centroids");
      if (!pairs_path.empty()) require_file(pairs_path, "--pairs");
      const SavedModel sm = read_model(model_path);
      const CentroidSet centroids = read_centroids(centroids_path);
      auto [primary, secondary] = load_data(eval_args);
      const LabeledDataset& ds = eval_args.synth.empty() ? primary : *secondary;
      if (ds.inputs.cols() != sm.model.input_dim())
        throw Error(Errc::dimension_mismatch, "data has " + std::to_string(ds.inputs.cols()) +
                                                  " columns, model expects " + std::to_string(sm.model.input_dim()));
      if (centroids.dim != sm.model.output_dim())
        throw Error(Errc::dimension_mismatch, "centroid dim " + std::to_string(centroids.dim) +
                                                  " != model feature dim " + std::to_string(sm.model.output_dim()));
      if (ds.num_classes > centroids.num_classes)
        throw Error(Errc::dimension_mismatch, "data has more classes than centroids");
      const Matrix features = extract_features(sm.model, ds.inputs);
      nlohmann::json report = eval_report_to_json(evaluate_features(features, ds.labels, centroids.centers));
      if (!pairs_path.empty()) {
        const auto pv = pair_verification(features, parse_pairs_csv(read_file(pairs_path)));
        report["pair_verification_accuracy"] = pv.accuracy;
        report["pair_threshold"] = pv.threshold;
      }
      out << report.dump(2) << "\n";
      return kExitOk;
    }

    if (*plot_cmd) {
      require_writable_parent(out_path, "--out");
      Matrix points;
      std::vector<std::size_t> labels;
      if (!centroids_path.empty() && model_path.empty()) {
        require_file(centroids_path, "--centroids");
        const CentroidSet cs = read_centroids(centroids_path);
        points = cs.centers;
        for (std::size_t j = 0; j < cs.num_classes; ++j) labels.push_back(j);
      } else if (!model_path.empty()) {
        require_file(model_path, "--model");
        const SavedModel sm = read_model(model_path);
        auto [primary, secondary] = load_data(plot_args);
        const LabeledDataset& ds = plot_args.synth.empty() ? primary : *secondary;
        if (ds.inputs.cols() != sm.model.input_dim())
          throw Error(Errc::dimension_mismatch, "data width does not match the model input");
        points = extract_features(sm.model, ds.inputs);
        labels = ds.labels;
      } else {
        throw UsageError("export-plot needs --centroids or --model with --data/--synth");
      }
      if (points.cols() < 3)
        throw Error(Errc::dimension_mismatch, "cannot project " + std::to_string(points.cols()) +
                                                  "-dimensional points to 3 coordinates");
      Matrix xyz(points.rows(), 3);
      if (projection == "first3") {
        for (std::size_t i = 0; i < points.rows(); ++i)
          for (std::size_t t = 0; t < 3; ++t) xyz(i, t) = points(i, t);
      } else {
        xyz = project(points, principal_components(points, 3, 0));
      }
      write_file(out_path, plot_points_to_csv(xyz, labels));
      out << "wrote " << points.rows() << " points to " << out_path << "\n";
      return kExitOk;
    }
  } catch (const UsageError& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return kExitUsage;
}

}  // namespace pedcc::cli
