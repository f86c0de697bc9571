#pragma once

// Logistic regression with in-model z-scoring, trained by full-batch gradient
// descent from zero weights.

#include <nlohmann/json.hpp>

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "errors.hpp"
#include "features.hpp"
#include "text_io.hpp"

namespace chainsight {

struct TrainOptions {
  double learning_rate = 0.1;
  std::uint32_t epochs = 500;
  double l2 = 1e-4;
  double threshold = 0.5;
};

struct LogisticModel {
  std::vector<double> weights;
  double bias = 0.0;
  std::vector<double> mean;
  std::vector<double> scale;
  double threshold = 0.5;
  std::string config_hash;

  std::size_t n_features() const noexcept { return weights.size(); }

  void validate() const {
    if (mean.size() != weights.size() || scale.size() != weights.size())
      throw shape_error("model standardization does not match its weight count");
    for (double s : scale)
      if (!(s > 0) || !std::isfinite(s)) throw domain_error("model scale must be positive and finite");
    if (!std::isfinite(bias)) throw domain_error("model bias is not finite");
    for (double w : weights)
      if (!std::isfinite(w)) throw domain_error("model weight is not finite");
  }
};

struct TrainResult {
  LogisticModel model;
  std::vector<double> loss; // objective before each epoch, then after the last
};

inline double sigmoid(double z) {
  if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

namespace detail {

// log(1 + e^z) without overflow.
inline double softplus(double z) { return z > 0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z)); }

inline void check_features(const FeatureMatrix& fm) {
  for (const auto& row : fm.rows) {
    if (row.size() != fm.n_features) throw shape_error("feature row width differs from the header");
    for (double v : row)
      if (!std::isfinite(v)) throw domain_error("non-finite feature value");
  }
}

} // namespace detail

inline TrainResult train_logistic(const FeatureMatrix& train, const TrainOptions& opt = {},
                                  bool record_loss = false) {
  detail::check_features(train);
  const std::size_t n = train.size();
  const std::size_t d = train.n_features;
  if (n == 0) throw domain_error("training set is empty");
  if (train.labels.size() != n) throw shape_error("training set needs one label per row");
  std::size_t pos = 0;
  for (int y : train.labels) {
    if (y != 0 && y != 1) throw domain_error("training labels must be 0 or 1");
    pos += static_cast<std::size_t>(y);
  }
  if (pos == 0 || pos == n) throw domain_error("training set must contain both classes");

  LogisticModel m;
  m.threshold = opt.threshold;
  m.weights.assign(d, 0.0);
  m.mean.assign(d, 0.0);
  m.scale.assign(d, 1.0);
  for (const auto& row : train.rows)
    for (std::size_t j = 0; j < d; ++j) m.mean[j] += row[j];
  for (auto& v : m.mean) v /= static_cast<double>(n);
  std::vector<double> var(d, 0.0);
  for (const auto& row : train.rows)
    for (std::size_t j = 0; j < d; ++j) var[j] += (row[j] - m.mean[j]) * (row[j] - m.mean[j]);
  for (std::size_t j = 0; j < d; ++j) {
    const double sd = std::sqrt(var[j] / static_cast<double>(n));
    m.scale[j] = sd > 0 && std::isfinite(sd) ? sd : 1.0;
  }

  // Column-major standardized copy keeps the epoch loop tight.
  std::vector<double> x(n * d);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < d; ++j) x[j * n + i] = (train.rows[i][j] - m.mean[j]) / m.scale[j];

  TrainResult result;
  std::vector<double> z(n), grad(d);
  const double inv_n = 1.0 / static_cast<double>(n);
  auto objective = [&] {
    double loss = 0;
    for (std::size_t i = 0; i < n; ++i) loss += detail::softplus(z[i]) - (train.labels[i] ? z[i] : 0.0);
    double reg = 0;
    for (double w : m.weights) reg += w * w;
    return loss * inv_n + 0.5 * opt.l2 * reg;
  };
  auto logits = [&] {
    std::fill(z.begin(), z.end(), m.bias);
    for (std::size_t j = 0; j < d; ++j) {
      const double w = m.weights[j];
      const double* col = &x[j * n];
      for (std::size_t i = 0; i < n; ++i) z[i] += w * col[i];
    }
  };

  for (std::uint32_t epoch = 0; epoch < opt.epochs; ++epoch) {
    logits();
    if (record_loss) result.loss.push_back(objective());
    double gb = 0;
    std::fill(grad.begin(), grad.end(), 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      const double r = sigmoid(z[i]) - train.labels[i];
      z[i] = r;
      gb += r;
    }
    for (std::size_t j = 0; j < d; ++j) {
      const double* col = &x[j * n];
      double g = 0;
      for (std::size_t i = 0; i < n; ++i) g += z[i] * col[i];
      grad[j] = g * inv_n + opt.l2 * m.weights[j];
    }
    m.bias -= opt.learning_rate * gb * inv_n;
    for (std::size_t j = 0; j < d; ++j) m.weights[j] -= opt.learning_rate * grad[j];
  }
  if (record_loss) {
    logits();
    result.loss.push_back(objective());
  }
  result.model = std::move(m);
  return result;
}

inline LogisticModel train(const FeatureMatrix& data, const TrainOptions& opt = {}) {
  return train_logistic(data, opt).model;
}

inline double predict_proba(const LogisticModel& m, std::span<const double> x) {
  if (x.size() != m.n_features())
    throw shape_error("feature width " + std::to_string(x.size()) + " does not match model width " +
                      std::to_string(m.n_features()));
  double z = m.bias;
  for (std::size_t j = 0; j < x.size(); ++j) z += m.weights[j] * (x[j] - m.mean[j]) / m.scale[j];
  return sigmoid(z);
}

struct Predictions {
  std::vector<double> probability;
  std::vector<int> label;
};

inline Predictions predict(const LogisticModel& m, const FeatureMatrix& fm) {
  if (fm.n_features != m.n_features())
    throw shape_error("feature width " + std::to_string(fm.n_features) + " does not match model width " +
                      std::to_string(m.n_features()));
  Predictions p;
  p.probability.reserve(fm.size());
  p.label.reserve(fm.size());
  for (const auto& row : fm.rows) {
    const double pr = predict_proba(m, row);
    p.probability.push_back(pr);
    p.label.push_back(pr >= m.threshold ? 1 : 0);
  }
  return p;
}

/// Rates whose denominator is zero are left empty.
struct Metrics {
  std::uint64_t tp = 0, fp = 0, tn = 0, fn = 0;
  double accuracy = 0;
  std::optional<double> precision;
  std::optional<double> recall;
  std::optional<double> fpr;
  std::optional<double> fnr;

  std::uint64_t total() const noexcept { return tp + fp + tn + fn; }
};

inline Metrics metrics_from_counts(std::uint64_t tp, std::uint64_t fp, std::uint64_t tn, std::uint64_t fn) {
  Metrics m;
  m.tp = tp;
  m.fp = fp;
  m.tn = tn;
  m.fn = fn;
  const std::uint64_t total = tp + fp + tn + fn;
  if (total == 0) throw domain_error("cannot compute metrics on an empty test set");
  auto ratio = [](std::uint64_t a, std::uint64_t b) -> std::optional<double> {
    if (b == 0) return std::nullopt;
    return static_cast<double>(a) / static_cast<double>(b);
  };
  m.accuracy = static_cast<double>(tp + tn) / static_cast<double>(total);
  m.precision = ratio(tp, tp + fp);
  m.recall = ratio(tp, tp + fn);
  m.fnr = ratio(fn, tp + fn);
  m.fpr = ratio(fp, fp + tn);
  return m;
}

inline Metrics score(std::span<const int> truth, std::span<const int> predicted) {
  if (truth.size() != predicted.size()) throw shape_error("label vectors differ in length");
  std::uint64_t tp = 0, fp = 0, tn = 0, fn = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    if (truth[i] != 0 && truth[i] != 1) throw domain_error("test labels must be 0 or 1");
    if (truth[i] == 1) (predicted[i] ? tp : fn)++;
    else (predicted[i] ? fp : tn)++;
  }
  return metrics_from_counts(tp, fp, tn, fn);
}

inline Metrics evaluate(const LogisticModel& m, const FeatureMatrix& test) {
  if (test.size() == 0) throw domain_error("test set is empty");
  if (test.labels.size() != test.size()) throw shape_error("test set needs one label per row");
  detail::check_features(test);
  const auto p = predict(m, test);
  return score(test.labels, p.label);
}

// ---- model files -------------------------------------------------------------

inline nlohmann::json to_json(const LogisticModel& m) {
  return {{"weights", m.weights}, {"bias", m.bias},           {"mean", m.mean},
          {"scale", m.scale},     {"threshold", m.threshold}, {"config_hash", m.config_hash}};
}

inline LogisticModel logistic_model_from_json(const nlohmann::json& j) {
  LogisticModel m;
  try {
    m.weights = j.at("weights").get<std::vector<double>>();
    m.bias = j.at("bias").get<double>();
    m.mean = j.at("mean").get<std::vector<double>>();
    m.scale = j.at("scale").get<std::vector<double>>();
    m.threshold = j.value("threshold", 0.5);
    m.config_hash = j.value("config_hash", std::string{});
  } catch (const nlohmann::json::exception& e) {
    throw format_error(std::string("model: ") + e.what());
  }
  m.validate();
  return m;
}

inline void save_model(const std::filesystem::path& path, const LogisticModel& m) {
  auto out = text_io::open_out(path);
  out << to_json(m).dump(2) << '\n';
}

inline LogisticModel load_model(const std::filesystem::path& path) {
  auto in = text_io::open_in(path);
  try {
    return logistic_model_from_json(nlohmann::json::parse(in));
  } catch (const nlohmann::json::exception& e) {
    throw format_error(path.string() + ": " + e.what());
  }
}

} // namespace chainsight
