#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "collusion/error.hpp"
#include "collusion/parallel.hpp"
#include "collusion/rng.hpp"

namespace collusion::iforest {

inline constexpr int kFormatVersion = 2;

/// Dense row-major matrix of feature vectors.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols) : rows_(rows), cols_(cols), values_(rows * cols) {}

  static Matrix from_rows(const std::vector<std::vector<double>>& rows) {
    if (rows.empty()) return Matrix(0, 0);
    Matrix m(rows.size(), rows.front().size());
    for (std::size_t i = 0; i < rows.size(); ++i) {
      if (rows[i].size() != m.cols_) {
        throw Error(ErrorCode::kWidthMismatch, "row " + std::to_string(i) + " has width " +
                                                   std::to_string(rows[i].size()));
      }
      std::copy(rows[i].begin(), rows[i].end(), m.row(i).begin());
    }
    return m;
  }

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::span<double> row(std::size_t i) { return {values_.data() + i * cols_, cols_}; }
  std::span<const double> row(std::size_t i) const { return {values_.data() + i * cols_, cols_}; }
  double operator()(std::size_t r, std::size_t c) const { return values_[r * cols_ + c]; }

  void append_row(std::span<const double> r) {
    if (rows_ == 0 && cols_ == 0) cols_ = r.size();
    if (r.size() != cols_) throw Error(ErrorCode::kWidthMismatch, "appended row width differs");
    values_.insert(values_.end(), r.begin(), r.end());
    ++rows_;
  }

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> values_;
};

struct ForestParams {
  std::size_t n_trees = 100;
  std::size_t subsample = 1000;
  std::uint64_t seed = 0;
  /// Defaults to ceil(log2(per-tree sample size)).
  std::optional<std::size_t> max_depth;

  bool operator==(const ForestParams&) const = default;
};

struct FitOptions {
  bool scale_features = true;
  std::size_t threads = 1;
};

struct FeatureRange {
  double min = 0.0;
  double max = 0.0;

  bool operator==(const FeatureRange&) const = default;
};

/// Min-max scaling; constant features map to 0.
inline double scale_value(double x, const FeatureRange& r) {
  const double width = r.max - r.min;
  return width > 0.0 ? (x - r.min) / width : 0.0;
}

inline std::vector<FeatureRange> feature_ranges(const Matrix& data) {
  std::vector<FeatureRange> out(data.cols(), {std::numeric_limits<double>::infinity(),
                                              -std::numeric_limits<double>::infinity()});
  for (std::size_t i = 0; i < data.rows(); ++i) {
    for (std::size_t c = 0; c < data.cols(); ++c) {
      out[c].min = std::min(out[c].min, data(i, c));
      out[c].max = std::max(out[c].max, data(i, c));
    }
  }
  return out;
}

inline Matrix scale_matrix(const Matrix& data, std::span<const FeatureRange> ranges) {
  Matrix out(data.rows(), data.cols());
  for (std::size_t i = 0; i < data.rows(); ++i) {
    for (std::size_t c = 0; c < data.cols(); ++c) out.row(i)[c] = scale_value(data(i, c), ranges[c]);
  }
  return out;
}

/// Flat binary tree; node 0 is the root. External nodes have feature == -1.
struct IsoTree {
  struct Node {
    std::int32_t feature = -1;
    double split = 0.0;
    std::uint32_t left = 0;
    std::uint32_t right = 0;
    std::uint32_t size = 0;

    bool external() const noexcept { return feature < 0; }
    bool operator==(const Node&) const = default;
  };

  std::vector<Node> nodes;

  std::size_t depth() const {
    std::size_t best = 0;
    std::vector<std::pair<std::uint32_t, std::size_t>> stack{{0, 0}};
    while (!stack.empty()) {
      auto [id, d] = stack.back();
      stack.pop_back();
      best = std::max(best, d);
      if (!nodes[id].external()) {
        stack.push_back({nodes[id].left, d + 1});
        stack.push_back({nodes[id].right, d + 1});
      }
    }
    return best;
  }

  bool operator==(const IsoTree&) const = default;
};

/// Exact harmonic sum for n <= 1000, asymptotic expansion beyond.
inline double harmonic(std::size_t n) {
  if (n <= 1000) {
    double h = 0.0;
    for (std::size_t k = 1; k <= n; ++k) h += 1.0 / static_cast<double>(k);
    return h;
  }
  const double x = static_cast<double>(n);
  return std::log(x) + 0.5772156649 + 1.0 / (2.0 * x);
}

/// Average path length of an unsuccessful BST search over n points; the
/// normalizer for isolation depths.
inline double average_path_length(std::size_t n) {
  if (n <= 1) return 0.0;
  if (n == 2) return 1.0;
  const double nd = static_cast<double>(n);
  return 2.0 * harmonic(n - 1) - 2.0 * (nd - 1.0) / nd;
}

/// Score on the "negative means outlier" scale: 0.5 - 2^(-E/c(psi)).
struct AnomalyScore {
  double value = 0.0;

  bool is_outlier() const noexcept { return value < 0.0; }
  auto operator<=>(const AnomalyScore&) const = default;
};

inline double path_length(const IsoTree& tree, std::span<const double> x) {
  std::uint32_t id = 0;
  double edges = 0.0;
  while (!tree.nodes[id].external()) {
    const auto& n = tree.nodes[id];
    id = x[static_cast<std::size_t>(n.feature)] < n.split ? n.left : n.right;
    edges += 1.0;
  }
  return edges + average_path_length(tree.nodes[id].size);
}

class ForestModel {
 public:
  const ForestParams& params() const noexcept { return params_; }
  const std::vector<IsoTree>& trees() const noexcept { return trees_; }
  const std::vector<FeatureRange>& feature_ranges() const noexcept { return ranges_; }
  std::size_t n_features() const noexcept { return n_features_; }
  std::size_t sample_size() const noexcept { return sample_size_; }
  std::size_t max_depth() const noexcept { return max_depth_; }
  bool scaled() const noexcept { return scaled_; }

  /// Mean path length across trees, after the model's own scaling.
  double mean_path_length(std::span<const double> x) const {
    check_width(x.size());
    std::vector<double> local;
    if (scaled_) {
      local.resize(x.size());
      for (std::size_t c = 0; c < x.size(); ++c) local[c] = scale_value(x[c], ranges_[c]);
      x = local;
    }
    double total = 0.0;
    for (const IsoTree& t : trees_) total += path_length(t, x);
    return total / static_cast<double>(trees_.size());
  }

  AnomalyScore score(std::span<const double> x) const {
    const double normalized = std::exp2(-mean_path_length(x) / average_path_length(sample_size_));
    return {0.5 - normalized};
  }

  std::vector<AnomalyScore> score_all(const Matrix& data, std::size_t threads = 1) const {
    check_width(data.cols());
    std::vector<AnomalyScore> out(data.rows());
    parallel_for(data.rows(), threads, [&](std::size_t i) { out[i] = score(data.row(i)); });
    return out;
  }

  bool operator==(const ForestModel&) const = default;

 private:
  friend ForestModel fit(const Matrix&, const ForestParams&, const FitOptions&);
  friend ForestModel deserialize(std::string_view);

  void check_width(std::size_t width) const {
    if (width != n_features_) {
      throw Error(ErrorCode::kWidthMismatch, "expected " + std::to_string(n_features_) +
                                                 " features, got " + std::to_string(width));
    }
  }

  ForestParams params_;
  std::vector<IsoTree> trees_;
  std::vector<FeatureRange> ranges_;
  std::size_t n_features_ = 0;
  std::size_t sample_size_ = 0;
  std::size_t max_depth_ = 0;
  bool scaled_ = false;
};

inline double path_length(const ForestModel& model, std::size_t tree, std::span<const double> x) {
  if (x.size() != model.n_features()) {
    throw Error(ErrorCode::kWidthMismatch, "feature vector width differs from model");
  }
  return path_length(model.trees().at(tree), x);
}

namespace detail {

class TreeBuilder {
 public:
  TreeBuilder(const Matrix& data, std::size_t max_depth, Rng& rng)
      : data_(data), max_depth_(max_depth), rng_(rng) {}

  IsoTree build(std::vector<std::size_t> rows) {
    tree_.nodes.clear();
    grow(rows, 0, rows.size(), 0);
    return std::move(tree_);
  }

 private:
  std::uint32_t grow(std::vector<std::size_t>& rows, std::size_t begin, std::size_t end,
                     std::size_t depth) {
    const auto id = static_cast<std::uint32_t>(tree_.nodes.size());
    tree_.nodes.push_back({});
    const std::size_t count = end - begin;
    auto make_external = [&] {
      tree_.nodes[id].size = static_cast<std::uint32_t>(count);
      return id;
    };
    if (count <= 1 || depth >= max_depth_) return make_external();

    // Only features with spread at this node are eligible.
    spread_.clear();
    bounds_.assign(data_.cols(), {std::numeric_limits<double>::infinity(),
                                  -std::numeric_limits<double>::infinity()});
    for (std::size_t i = begin; i < end; ++i) {
      const auto r = data_.row(rows[i]);
      for (std::size_t c = 0; c < r.size(); ++c) {
        bounds_[c].min = std::min(bounds_[c].min, r[c]);
        bounds_[c].max = std::max(bounds_[c].max, r[c]);
      }
    }
    for (std::size_t c = 0; c < bounds_.size(); ++c) {
      if (bounds_[c].max > bounds_[c].min) spread_.push_back(c);
    }
    if (spread_.empty()) return make_external();

    const std::size_t feature = spread_[rng_.below(spread_.size())];
    const FeatureRange b = bounds_[feature];
    double split = b.min + (b.max - b.min) * rng_.uniform_open();
    // Rounding can land on an endpoint when the spread is a few ulps wide.
    if (!(split > b.min && split < b.max)) split = std::nextafter(b.min, b.max);
    if (!(split < b.max)) split = b.max;

    const auto mid = std::partition(
        rows.begin() + static_cast<std::ptrdiff_t>(begin),
        rows.begin() + static_cast<std::ptrdiff_t>(end),
        [&](std::size_t r) { return data_(r, feature) < split; });
    const auto split_at = static_cast<std::size_t>(mid - rows.begin());

    const std::uint32_t left = grow(rows, begin, split_at, depth + 1);
    const std::uint32_t right = grow(rows, split_at, end, depth + 1);
    auto& node = tree_.nodes[id];
    node.feature = static_cast<std::int32_t>(feature);
    node.split = split;
    node.left = left;
    node.right = right;
    node.size = static_cast<std::uint32_t>(count);
    return id;
  }

  const Matrix& data_;
  std::size_t max_depth_;
  Rng& rng_;
  IsoTree tree_;
  std::vector<std::size_t> spread_;
  std::vector<FeatureRange> bounds_;
};

}  // namespace detail

/// Trains `n_trees` isolation trees, each on a sample drawn without
/// replacement. Tree i uses its own RNG stream seeded from (seed, i), so the
/// result does not depend on the thread count.
inline ForestModel fit(const Matrix& data, const ForestParams& params,
                       const FitOptions& opts = {}) {
  if (params.n_trees < 1) throw Error(ErrorCode::kConfigError, "n_trees must be >= 1");
  if (params.subsample < 2) throw Error(ErrorCode::kConfigError, "subsample must be >= 2");
  if (data.rows() < 2 || data.cols() == 0) {
    throw Error(ErrorCode::kEmptyData, "need at least 2 rows with >= 1 feature, got " +
                                           std::to_string(data.rows()));
  }
  for (std::size_t i = 0; i < data.rows(); ++i) {
    for (double v : data.row(i)) {
      if (!std::isfinite(v)) {
        throw Error(ErrorCode::kNonFiniteFeature, "row " + std::to_string(i));
      }
    }
  }

  ForestModel model;
  model.params_ = params;
  model.n_features_ = data.cols();
  model.ranges_ = feature_ranges(data);
  model.scaled_ = opts.scale_features;
  model.sample_size_ = std::min(params.subsample, data.rows());
  model.max_depth_ = params.max_depth.value_or(static_cast<std::size_t>(
      std::ceil(std::log2(static_cast<double>(model.sample_size_)))));

  const Matrix scaled = opts.scale_features ? scale_matrix(data, model.ranges_) : Matrix{};
  const Matrix& training = opts.scale_features ? scaled : data;

  model.trees_.resize(params.n_trees);
  parallel_for(params.n_trees, opts.threads, [&](std::size_t t) {
    Rng rng(mix_seed(params.seed, t));
    // A full-table sample skips the draw so every split consumes the same stream.
    std::vector<std::size_t> rows(data.rows());
    std::iota(rows.begin(), rows.end(), std::size_t{0});
    if (model.sample_size_ < data.rows()) {
      rows = rng.sample_without_replacement(data.rows(), model.sample_size_);
    }
    detail::TreeBuilder builder(training, model.max_depth_, rng);
    model.trees_[t] = builder.build(std::move(rows));
  });
  return model;
}

inline std::string serialize(const ForestModel& model) {
  nlohmann::ordered_json j;
  j["format_version"] = kFormatVersion;
  const ForestParams& p = model.params();
  j["params"] = {{"n_trees", p.n_trees},
                 {"subsample", p.subsample},
                 {"seed", p.seed},
                 {"max_depth", p.max_depth ? nlohmann::ordered_json(*p.max_depth) : nullptr}};
  j["n_features"] = model.n_features();
  j["sample_size"] = model.sample_size();
  j["max_depth"] = model.max_depth();
  j["scaled"] = model.scaled();
  j["feature_ranges"] = nlohmann::ordered_json::array();
  for (const FeatureRange& r : model.feature_ranges()) j["feature_ranges"].push_back({r.min, r.max});
  j["trees"] = nlohmann::ordered_json::array();
  for (const IsoTree& t : model.trees()) {
    nlohmann::ordered_json nodes = nlohmann::ordered_json::array();
    for (const auto& n : t.nodes) {
      if (n.external()) {
        nodes.push_back({n.size});
      } else {
        nodes.push_back({n.feature, n.split, n.left, n.right, n.size});
      }
    }
    j["trees"].push_back(std::move(nodes));
  }
  return j.dump();
}

/// Throws VersionMismatch for another format_version and CorruptModel for
/// anything structurally wrong, including truncation.
inline ForestModel deserialize(std::string_view text) {
  using nlohmann::json;
  const json j = json::parse(text, nullptr, /*allow_exceptions=*/false);
  if (j.is_discarded() || !j.is_object()) {
    throw Error(ErrorCode::kCorruptModel, "model text is not a complete JSON object");
  }
  // Older writers stored the version as a string.
  int version = 0;
  const auto field = j.find("format_version");
  if (field != j.end() && field->is_number_integer()) {
    version = field->get<int>();
  } else if (field != j.end() && field->is_string()) {
    const std::string& text_version = field->get_ref<const std::string&>();
    const auto [end, ec] = std::from_chars(text_version.data(),
                                           text_version.data() + text_version.size(), version);
    if (ec != std::errc() || end != text_version.data() + text_version.size()) {
      throw Error(ErrorCode::kCorruptModel, "unreadable format_version");
    }
  } else {
    throw Error(ErrorCode::kCorruptModel, "missing format_version");
  }
  if (version != kFormatVersion) {
    throw Error(ErrorCode::kVersionMismatch, "model format_version " + std::to_string(version) +
                                                 ", reader expects " +
                                                 std::to_string(kFormatVersion));
  }
  ForestModel model;
  try {
    const json& p = j.at("params");
    model.params_.n_trees = p.at("n_trees").get<std::size_t>();
    model.params_.subsample = p.at("subsample").get<std::size_t>();
    model.params_.seed = p.at("seed").get<std::uint64_t>();
    if (!p.at("max_depth").is_null()) model.params_.max_depth = p["max_depth"].get<std::size_t>();
    model.n_features_ = j.at("n_features").get<std::size_t>();
    model.sample_size_ = j.at("sample_size").get<std::size_t>();
    model.max_depth_ = j.at("max_depth").get<std::size_t>();
    model.scaled_ = j.at("scaled").get<bool>();
    for (const json& r : j.at("feature_ranges")) {
      model.ranges_.push_back({r.at(0).get<double>(), r.at(1).get<double>()});
    }
    for (const json& jt : j.at("trees")) {
      IsoTree t;
      for (const json& n : jt) {
        IsoTree::Node node;
        if (n.size() == 1) {
          node.size = n.at(0).get<std::uint32_t>();
        } else if (n.size() == 5) {
          node.feature = n.at(0).get<std::int32_t>();
          node.split = n.at(1).get<double>();
          node.left = n.at(2).get<std::uint32_t>();
          node.right = n.at(3).get<std::uint32_t>();
          node.size = n.at(4).get<std::uint32_t>();
        } else {
          throw std::invalid_argument("node arity");
        }
        t.nodes.push_back(node);
      }
      model.trees_.push_back(std::move(t));
    }
  } catch (const std::exception& e) {
    throw Error(ErrorCode::kCorruptModel, e.what());
  }

  auto corrupt = [](const std::string& why) { throw Error(ErrorCode::kCorruptModel, why); };
  if (model.n_features_ == 0 || model.ranges_.size() != model.n_features_) corrupt("feature_ranges");
  if (model.trees_.size() != model.params_.n_trees || model.trees_.empty()) corrupt("tree count");
  if (model.sample_size_ < 2) corrupt("sample_size");
  for (const IsoTree& t : model.trees_) {
    if (t.nodes.empty()) corrupt("empty tree");
    for (std::size_t i = 0; i < t.nodes.size(); ++i) {
      const auto& n = t.nodes[i];
      if (n.size == 0) corrupt("zero-size node");
      if (n.external()) continue;
      // Children always follow their parent, which also rules out cycles.
      if (static_cast<std::size_t>(n.feature) >= model.n_features_ || n.left <= i ||
          n.right <= i || n.left >= t.nodes.size() || n.right >= t.nodes.size()) {
        corrupt("bad node " + std::to_string(i));
      }
    }
  }
  return model;
}

}  // namespace collusion::iforest
