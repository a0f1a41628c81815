#pragma once

#include <algorithm>
#include <cstddef>
#include <string>
#include <vector>

#include "pedcc/numeric.hpp"

namespace pedcc {

enum class Split { train, eval };

struct LabeledDataset {
  Matrix inputs;  // n x d_in
  std::vector<std::size_t> labels;
  std::size_t num_classes = 0;
  Split split = Split::train;

  std::size_t size() const { return labels.size(); }

  void validate() const {
    if (inputs.rows() != labels.size())
      throw Error(Errc::dimension_mismatch, "dataset has " + std::to_string(inputs.rows()) + " rows but " +
                                                std::to_string(labels.size()) + " labels");
    for (std::size_t y : labels)
      if (y >= num_classes)
        throw Error(Errc::label_range, "label " + std::to_string(y) + " outside [0, " +
                                           std::to_string(num_classes) + ")");
  }

  friend bool operator==(const LabeledDataset&, const LabeledDataset&) = default;
};

/// Rows selected by index, in the given order.
inline LabeledDataset subset(const LabeledDataset& ds, const std::vector<std::size_t>& rows) {
  LabeledDataset out;
  out.num_classes = ds.num_classes;
  out.split = ds.split;
  std::vector<double> data;
  data.reserve(rows.size() * ds.inputs.cols());
  for (std::size_t r : rows) {
    auto src = ds.inputs.row(r);
    data.insert(data.end(), src.begin(), src.end());
    out.labels.push_back(ds.labels[r]);
  }
  out.inputs = Matrix(rows.size(), ds.inputs.cols(), std::move(data));
  return out;
}

/// Stratified split keeping file order: the first `train_per_class` rows of
/// each class go to the train split, the remainder to the eval split.
inline std::pair<LabeledDataset, LabeledDataset> split_per_class(const LabeledDataset& ds,
                                                                 std::size_t train_per_class) {
  std::vector<std::size_t> seen(ds.num_classes, 0);
  std::vector<std::size_t> train_rows, eval_rows;
  for (std::size_t i = 0; i < ds.size(); ++i) {
    if (seen[ds.labels[i]]++ < train_per_class)
      train_rows.push_back(i);
    else
      eval_rows.push_back(i);
  }
  auto train = subset(ds, train_rows);
  auto eval = subset(ds, eval_rows);
  train.split = Split::train;
  eval.split = Split::eval;
  return {std::move(train), std::move(eval)};
}

}  // namespace pedcc
