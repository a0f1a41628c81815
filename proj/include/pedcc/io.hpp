#pragma once

// Dataset loaders (CSV, IDX), synthetic blobs, and the file formats used by
// the command-line tool: centroid JSON, model JSON, training-log CSV,
// evaluation JSON, pair lists, and plot coordinates.

#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <iterator>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include <nlohmann/json.hpp>

#include "pedcc/centroids.hpp"
#include "pedcc/dataset.hpp"
#include "pedcc/metrics.hpp"
#include "pedcc/mlp.hpp"
#include "pedcc/numeric.hpp"
#include "pedcc/trainer.hpp"

namespace pedcc {

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::io_error, "cannot open '" + path + "' for reading");
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline void write_file(const std::string& path, std::string_view contents) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(Errc::io_error, "cannot open '" + path + "' for writing");
  out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
  if (!out) throw Error(Errc::io_error, "failed writing '" + path + "'");
}

// ---------------------------------------------------------------------------
// CSV

enum class CsvNormalization { none, standardize };

struct FeatureStats {
  std::vector<double> mean;
  std::vector<double> stddev;  // columns with zero spread keep stddev 1
};

struct CsvOptions {
  std::string label_column = "label";
  CsvNormalization normalization = CsvNormalization::none;
  // When set, standardisation reuses these statistics (e.g. the train split's).
  std::optional<FeatureStats> stats;
  std::optional<std::size_t> num_classes;
  Split split = Split::train;
};

struct CsvDataset {
  LabeledDataset data;
  std::vector<std::string> feature_names;
  std::optional<FeatureStats> stats;
};

namespace detail {

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

inline std::vector<std::string_view> split_cells(std::string_view line) {
  std::vector<std::string_view> cells;
  std::size_t start = 0;
  for (;;) {
    const std::size_t comma = line.find(',', start);
    cells.push_back(trim(line.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start)));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return cells;
}

inline std::optional<double> parse_double(std::string_view s) {
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size() || s.empty()) return std::nullopt;
  return v;
}

inline std::optional<long long> parse_integer(std::string_view s) {
  long long v = 0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size() || s.empty()) return std::nullopt;
  return v;
}

inline std::vector<std::string_view> split_lines(std::string_view text) {
  std::vector<std::string_view> lines;
  std::size_t start = 0;
  while (start <= text.size()) {
    const std::size_t nl = text.find('\n', start);
    if (nl == std::string_view::npos) {
      lines.push_back(text.substr(start));
      break;
    }
    lines.push_back(text.substr(start, nl - start));
    start = nl + 1;
  }
  return lines;
}

}  // namespace detail

inline FeatureStats compute_feature_stats(const Matrix& m) {
  FeatureStats s;
  s.mean.assign(m.cols(), 0.0);
  s.stddev.assign(m.cols(), 0.0);
  if (m.rows() == 0) {
    s.stddev.assign(m.cols(), 1.0);
    return s;
  }
  const double n = static_cast<double>(m.rows());
  for (std::size_t i = 0; i < m.rows(); ++i)
    for (std::size_t t = 0; t < m.cols(); ++t) s.mean[t] += m(i, t) / n;
  for (std::size_t i = 0; i < m.rows(); ++i)
    for (std::size_t t = 0; t < m.cols(); ++t) {
      const double d = m(i, t) - s.mean[t];
      s.stddev[t] += d * d / n;
    }
  for (double& v : s.stddev) v = v > 0.0 ? std::sqrt(v) : 1.0;
  return s;
}

inline void apply_standardization(Matrix& m, const FeatureStats& s) {
  if (s.mean.size() != m.cols()) throw Error(Errc::dimension_mismatch, "standardisation stats width mismatch");
  for (std::size_t i = 0; i < m.rows(); ++i)
    for (std::size_t t = 0; t < m.cols(); ++t) m(i, t) = (m(i, t) - s.mean[t]) / s.stddev[t];
}

/// Parses CSV text with a header row. Every column except the label column is
/// a feature; rows keep file order. Errors name the 1-based line number.
inline CsvDataset parse_csv(std::string_view text, const CsvOptions& opt = {}) {
  const auto lines = detail::split_lines(text);
  std::size_t header_line = 0;
  while (header_line < lines.size() && detail::trim(lines[header_line]).empty()) ++header_line;
  if (header_line == lines.size()) throw Error(Errc::parse_error, "line 1: missing header row");
  const auto header = detail::split_cells(lines[header_line]);
  std::optional<std::size_t> label_idx;
  CsvDataset out;
  for (std::size_t i = 0; i < header.size(); ++i) {
    if (header[i] == opt.label_column)
      label_idx = i;
    else
      out.feature_names.emplace_back(header[i]);
  }
  if (!label_idx)
    throw Error(Errc::parse_error, "line " + std::to_string(header_line + 1) + ": no column named '" +
                                       opt.label_column + "'");

  std::vector<double> values;
  std::vector<std::size_t> labels;
  std::size_t max_label = 0;
  for (std::size_t ln = header_line + 1; ln < lines.size(); ++ln) {
    if (detail::trim(lines[ln]).empty()) continue;
    const std::string where = "line " + std::to_string(ln + 1);
    const auto cells = detail::split_cells(lines[ln]);
    if (cells.size() != header.size())
      throw Error(Errc::parse_error, where + ": expected " + std::to_string(header.size()) + " cells, found " +
                                         std::to_string(cells.size()));
    for (std::size_t i = 0; i < cells.size(); ++i) {
      if (i == *label_idx) {
        const auto y = detail::parse_integer(cells[i]);
        if (!y) throw Error(Errc::parse_error, where + ": label '" + std::string(cells[i]) + "' is not an integer");
        if (*y < 0) throw Error(Errc::label_range, where + ": negative label " + std::to_string(*y));
        if (opt.num_classes && static_cast<std::size_t>(*y) >= *opt.num_classes)
          throw Error(Errc::label_range, where + ": label " + std::to_string(*y) + " >= num_classes " +
                                             std::to_string(*opt.num_classes));
        labels.push_back(static_cast<std::size_t>(*y));
        max_label = std::max(max_label, labels.back());
      } else {
        const auto v = detail::parse_double(cells[i]);
        if (!v || !std::isfinite(*v))
          throw Error(Errc::parse_error, where + ": value '" + std::string(cells[i]) + "' is not a finite number");
        values.push_back(*v);
      }
    }
  }
  out.data.inputs = Matrix(labels.size(), out.feature_names.size(), std::move(values));
  out.data.labels = std::move(labels);
  out.data.num_classes = opt.num_classes ? *opt.num_classes : (out.data.labels.empty() ? 0 : max_label + 1);
  out.data.split = opt.split;
  if (opt.normalization == CsvNormalization::standardize) {
    out.stats = opt.stats ? *opt.stats : compute_feature_stats(out.data.inputs);
    apply_standardization(out.data.inputs, *out.stats);
  }
  return out;
}

inline CsvDataset load_csv(const std::string& path, const CsvOptions& opt = {}) {
  return parse_csv(read_file(path), opt);
}

/// Writes a dataset in the format parse_csv reads: f0..f{d-1} then label.
inline std::string dataset_to_csv(const LabeledDataset& ds, const std::string& label_column = "label") {
  std::ostringstream os;
  char buf[64];
  for (std::size_t t = 0; t < ds.inputs.cols(); ++t) os << 'f' << t << ',';
  os << label_column << '\n';
  for (std::size_t i = 0; i < ds.size(); ++i) {
    for (std::size_t t = 0; t < ds.inputs.cols(); ++t) {
      const auto res = std::to_chars(buf, buf + sizeof buf, ds.inputs(i, t));
      os.write(buf, res.ptr - buf) << ',';
    }
    os << ds.labels[i] << '\n';
  }
  return os.str();
}

// ---------------------------------------------------------------------------
// IDX (MNIST family). Layout: two zero bytes, a type byte (0x08 = unsigned
// byte), a dimension-count byte, then one big-endian uint32 per dimension,
// then the raw payload.

namespace detail {

struct IdxHeader {
  std::vector<std::uint32_t> dims;
  std::size_t payload_offset;
};

inline IdxHeader parse_idx_header(std::string_view bytes, std::uint8_t expected_dims, const std::string& what) {
  if (bytes.size() < 4) throw Error(Errc::truncated, what + ": file shorter than the IDX magic");
  const auto u = [&](std::size_t i) { return static_cast<std::uint8_t>(bytes[i]); };
  if (u(0) != 0 || u(1) != 0 || u(2) != 0x08 || u(3) != expected_dims)
    throw Error(Errc::bad_magic, what + ": expected magic 00 00 08 0" + std::to_string(expected_dims));
  IdxHeader h;
  h.payload_offset = 4 + 4 * static_cast<std::size_t>(expected_dims);
  if (bytes.size() < h.payload_offset) throw Error(Errc::truncated, what + ": header truncated");
  for (std::size_t k = 0; k < expected_dims; ++k) {
    const std::size_t o = 4 + 4 * k;
    h.dims.push_back((std::uint32_t{u(o)} << 24) | (std::uint32_t{u(o + 1)} << 16) | (std::uint32_t{u(o + 2)} << 8) |
                     std::uint32_t{u(o + 3)});
  }
  return h;
}

}  // namespace detail

/// Decodes an image/label IDX pair held in memory. Pixels are scaled by 1/255
/// and flattened row-major; `limit` keeps only the first records.
inline LabeledDataset parse_idx(std::string_view images, std::string_view labels,
                                std::optional<std::size_t> limit = std::nullopt,
                                std::optional<std::size_t> num_classes = std::nullopt) {
  const auto ih = detail::parse_idx_header(images, 3, "images");
  const auto lh = detail::parse_idx_header(labels, 1, "labels");
  if (ih.dims[0] != lh.dims[0])
    throw Error(Errc::count_mismatch, std::to_string(ih.dims[0]) + " images vs " + std::to_string(lh.dims[0]) +
                                          " labels");
  const std::size_t count = ih.dims[0];
  const std::size_t pixels = static_cast<std::size_t>(ih.dims[1]) * ih.dims[2];
  if (images.size() - ih.payload_offset < count * pixels)
    throw Error(Errc::truncated, "image payload shorter than " + std::to_string(count) + " records");
  if (labels.size() - lh.payload_offset < count)
    throw Error(Errc::truncated, "label payload shorter than " + std::to_string(count) + " records");

  const std::size_t n = limit ? std::min(*limit, count) : count;
  LabeledDataset ds;
  std::vector<double> values(n * pixels);
  for (std::size_t i = 0; i < n * pixels; ++i)
    values[i] = static_cast<double>(static_cast<std::uint8_t>(images[ih.payload_offset + i])) / 255.0;
  ds.inputs = Matrix(n, pixels, std::move(values));
  std::size_t max_label = 0;
  for (std::size_t i = 0; i < n; ++i) {
    ds.labels.push_back(static_cast<std::uint8_t>(labels[lh.payload_offset + i]));
    max_label = std::max(max_label, ds.labels.back());
  }
  ds.num_classes = num_classes ? *num_classes : (n == 0 ? 0 : max_label + 1);
  ds.validate();
  return ds;
}

inline LabeledDataset load_idx(const std::string& images_path, const std::string& labels_path,
                               std::optional<std::size_t> limit = std::nullopt,
                               std::optional<std::size_t> num_classes = std::nullopt) {
  return parse_idx(read_file(images_path), read_file(labels_path), limit, num_classes);
}

// ---------------------------------------------------------------------------
// Synthetic Gaussian blobs

/// Class centers are drawn once as center_scale * N(0, I); each sample adds
/// noise_sigma * N(0, I). Samples cycle through the classes.
inline LabeledDataset synth_blobs(Rng& rng, std::size_t c, std::size_t per_class, std::size_t d_in,
                                  double center_scale, double noise_sigma) {
  if (c < 1 || per_class < 1 || d_in < 1) throw Error(Errc::invalid_argument, "synth_blobs counts must be >= 1");
  Matrix centers = gaussian_matrix(rng, c, d_in);
  for (double& v : centers.data()) v *= center_scale;
  LabeledDataset ds;
  ds.num_classes = c;
  ds.inputs = Matrix(c * per_class, d_in);
  for (std::size_t k = 0; k < per_class; ++k)
    for (std::size_t j = 0; j < c; ++j) {
      const std::size_t i = k * c + j;
      auto row = ds.inputs.row(i);
      auto ctr = centers.row(j);
      for (std::size_t t = 0; t < d_in; ++t) row[t] = ctr[t] + noise_sigma * rng.normal();
      ds.labels.push_back(j);
    }
  return ds;
}

// ---------------------------------------------------------------------------
// Centroid JSON. Floats are written as the shortest decimal that parses back
// to the identical double.

inline constexpr int kCentroidFormatVersion = 1;

inline nlohmann::json matrix_to_json(const Matrix& m) {
  auto rows = nlohmann::json::array();
  for (std::size_t r = 0; r < m.rows(); ++r) rows.push_back(std::vector<double>(m.row(r).begin(), m.row(r).end()));
  return rows;
}

inline Matrix matrix_from_json(const nlohmann::json& j, const std::string& what) {
  if (!j.is_array()) throw Error(Errc::schema_error, what + " must be an array of rows");
  const std::size_t rows = j.size();
  const std::size_t cols = rows ? j[0].size() : 0;
  std::vector<double> data;
  data.reserve(rows * cols);
  for (const auto& row : j) {
    if (!row.is_array() || row.size() != cols) throw Error(Errc::schema_error, what + " rows are ragged");
    for (const auto& v : row) {
      if (!v.is_number()) throw Error(Errc::schema_error, what + " holds a non-number");
      data.push_back(v.get<double>());
    }
  }
  return Matrix(rows, cols, std::move(data));
}

inline std::string centroids_to_json(const CentroidSet& cs) {
  nlohmann::json j;
  j["format_version"] = kCentroidFormatVersion;
  j["num_classes"] = cs.num_classes;
  j["dim"] = cs.dim;
  j["seed"] = cs.seed;
  j["force_exponent"] = cs.force_exponent;
  j["final_energy"] = cs.final_energy;
  j["iterations_run"] = cs.iterations_run;
  j["converged"] = cs.converged;
  j["centers"] = matrix_to_json(cs.centers);
  return j.dump(2) + "\n";
}

inline CentroidSet centroids_from_json(std::string_view text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::schema_error, std::string("invalid JSON: ") + e.what());
  }
  try {
    if (!j.is_object() || !j.contains("format_version")) throw Error(Errc::schema_error, "missing format_version");
    if (!j["format_version"].is_number_integer() || j["format_version"].get<int>() != kCentroidFormatVersion)
      throw Error(Errc::format_version_mismatch,
                  "unsupported format_version " + j["format_version"].dump() + " (expected " +
                      std::to_string(kCentroidFormatVersion) + ")");
    for (const char* key : {"num_classes", "dim", "seed", "force_exponent", "final_energy", "iterations_run", "centers"})
      if (!j.contains(key)) throw Error(Errc::schema_error, std::string("missing field '") + key + "'");
    CentroidSet cs;
    cs.num_classes = j.at("num_classes").get<std::size_t>();
    cs.dim = j.at("dim").get<std::size_t>();
    cs.seed = j.at("seed").get<std::uint64_t>();
    cs.force_exponent = j.at("force_exponent").get<double>();
    cs.final_energy = j.at("final_energy").get<double>();
    cs.iterations_run = j.at("iterations_run").get<std::size_t>();
    cs.converged = j.value("converged", true);
    cs.centers = matrix_from_json(j.at("centers"), "centers");
    if (cs.centers.rows() >= 2) cs.min_pairwise_angle_deg = min_pairwise_angle_deg(cs.centers);
    validate_centroid_set(cs);
    return cs;
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::schema_error, e.what());
  }
}

inline void write_centroids(const CentroidSet& cs, const std::string& path) { write_file(path, centroids_to_json(cs)); }

inline CentroidSet read_centroids(const std::string& path) { return centroids_from_json(read_file(path)); }

// ---------------------------------------------------------------------------
// Model JSON: the MLP plus the loss it was trained with and its classifier head.

struct SavedModel {
  MlpModel model;
  LossKind loss = LossKind::pedcc;
  ClassifierHead head;
};

inline std::string model_to_json(const SavedModel& sm) {
  nlohmann::json j;
  j["format_version"] = 1;
  j["activation"] = activation_name(sm.model.activation);
  j["widths"] = sm.model.widths;
  j["loss"] = loss_kind_name(sm.loss);
  auto layers = nlohmann::json::array();
  for (const auto& l : sm.model.layers) layers.push_back({{"weights", matrix_to_json(l.weights)}, {"bias", l.bias}});
  j["layers"] = std::move(layers);
  nlohmann::json head = nlohmann::json::object();
  if (!sm.head.weights.empty()) head["weights"] = matrix_to_json(sm.head.weights);
  if (!sm.head.bias.empty()) head["bias"] = sm.head.bias;
  if (!sm.head.centers.empty()) head["centers"] = matrix_to_json(sm.head.centers);
  j["head"] = std::move(head);
  return j.dump() + "\n";
}

inline SavedModel model_from_json(std::string_view text) {
  try {
    const auto j = nlohmann::json::parse(text);
    if (j.value("format_version", 0) != 1) throw Error(Errc::format_version_mismatch, "unsupported model format");
    SavedModel sm;
    sm.model.activation = parse_activation(j.at("activation").get<std::string>());
    sm.model.widths = j.at("widths").get<std::vector<std::size_t>>();
    sm.loss = parse_loss_kind(j.at("loss").get<std::string>());
    for (const auto& l : j.at("layers"))
      sm.model.layers.push_back({matrix_from_json(l.at("weights"), "layer weights"), l.at("bias").get<std::vector<double>>()});
    sm.model.validate();
    const auto& head = j.at("head");
    if (head.contains("weights")) sm.head.weights = matrix_from_json(head["weights"], "head weights");
    if (head.contains("bias")) sm.head.bias = head["bias"].get<std::vector<double>>();
    if (head.contains("centers")) sm.head.centers = matrix_from_json(head["centers"], "head centers");
    return sm;
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::schema_error, std::string("model file: ") + e.what());
  }
}

inline void write_model(const SavedModel& sm, const std::string& path) { write_file(path, model_to_json(sm)); }

inline SavedModel read_model(const std::string& path) { return model_from_json(read_file(path)); }

// ---------------------------------------------------------------------------
// Training log, evaluation report, pairs, plot coordinates

inline constexpr const char* kTrainLogHeader = "epoch,loss,train_acc,eval_acc,mean_cos,seconds";

inline std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline std::string train_log_to_csv(const TrainLog& log) {
  std::string out = std::string(kTrainLogHeader) + "\n";
  for (const auto& r : log.epochs)
    out += std::to_string(r.epoch) + "," + format_double(r.loss) + "," + format_double(r.train_acc) + "," +
           format_double(r.eval_acc) + "," + format_double(r.mean_cos) + "," + format_double(r.seconds) + "\n";
  return out;
}

inline nlohmann::json eval_report_to_json(const EvalReport& r) {
  nlohmann::json j;
  j["within_class_scatter_trace"] = r.within_class_scatter_trace;
  j["between_class_scatter_trace"] = r.between_class_scatter_trace;
  j["separability_ratio"] = r.separability_ratio;
  j["nearest_centroid_accuracy"] = r.nearest_centroid_accuracy;
  j["mean_cos_to_own_centroid"] = r.mean_cos_to_own_centroid;
  auto per = nlohmann::json::array();
  for (double v : r.per_class_mean_cos) per.push_back(std::isnan(v) ? nlohmann::json(nullptr) : nlohmann::json(v));
  j["per_class_mean_cos"] = std::move(per);
  return j;
}

/// Header index_a,index_b,same; `same` is 0/1 or false/true.
inline std::vector<VerificationPair> parse_pairs_csv(std::string_view text) {
  const auto lines = detail::split_lines(text);
  std::vector<VerificationPair> pairs;
  bool header_seen = false;
  for (std::size_t ln = 0; ln < lines.size(); ++ln) {
    if (detail::trim(lines[ln]).empty()) continue;
    const auto cells = detail::split_cells(lines[ln]);
    const std::string where = "line " + std::to_string(ln + 1);
    if (!header_seen) {
      if (cells.size() != 3 || cells[0] != "index_a" || cells[1] != "index_b" || cells[2] != "same")
        throw Error(Errc::parse_error, where + ": expected header index_a,index_b,same");
      header_seen = true;
      continue;
    }
    if (cells.size() != 3) throw Error(Errc::parse_error, where + ": expected 3 cells");
    const auto a = detail::parse_integer(cells[0]);
    const auto b = detail::parse_integer(cells[1]);
    if (!a || !b || *a < 0 || *b < 0) throw Error(Errc::parse_error, where + ": bad pair index");
    bool same;
    if (cells[2] == "1" || cells[2] == "true")
      same = true;
    else if (cells[2] == "0" || cells[2] == "false")
      same = false;
    else
      throw Error(Errc::parse_error, where + ": 'same' must be 0/1/true/false");
    pairs.push_back({static_cast<std::size_t>(*a), static_cast<std::size_t>(*b), same});
  }
  if (!header_seen) throw Error(Errc::parse_error, "line 1: missing header row");
  return pairs;
}

inline std::string plot_points_to_csv(const Matrix& xyz, std::span<const std::size_t> labels) {
  std::string out = "x,y,z,label\n";
  for (std::size_t i = 0; i < xyz.rows(); ++i)
    out += format_double(xyz(i, 0)) + "," + format_double(xyz(i, 1)) + "," + format_double(xyz(i, 2)) + "," +
           std::to_string(labels[i]) + "\n";
  return out;
}

}  // namespace pedcc
