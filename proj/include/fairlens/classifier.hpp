#pragma once

// L2-regularized logistic regression over record embeddings, trained by
// seeded mini-batch gradient descent. Used both as the base model and as the
// per-pair ensemble members.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "fairlens/common.hpp"
#include "fairlens/data_model.hpp"
#include "fairlens/metrics.hpp"
#include "fairlens/unify.hpp"

namespace fairlens {

struct TrainHyper {
  double learning_rate = 0.05;
  int epochs = 200;
  double l2 = 1e-4;
  std::size_t batch = 64;
  double threshold = 0.5;
  std::uint64_t seed = 0;
  double positive_weight = 1.0;  // loss weight of label-1 examples

  void check() const {
    if (!(learning_rate > 0.0)) throw UsageError("learning rate must be positive");
    if (epochs < 1) throw UsageError("epochs must be at least 1");
    if (l2 < 0.0) throw UsageError("l2 must be non-negative");
    if (batch < 1) throw UsageError("batch size must be at least 1");
    if (!(threshold > 0.0 && threshold < 1.0)) throw UsageError("threshold must lie in (0, 1)");
    if (!(positive_weight > 0.0)) throw UsageError("positive weight must be positive");
  }

  bool operator==(const TrainHyper&) const = default;
};

struct TrainingMeta {
  std::size_t n = 0;
  int epochs_run = 0;
  double final_loss = 0.0;
  bool operator==(const TrainingMeta&) const = default;
};

struct BinaryModel {
  std::vector<double> weights;
  double bias = 0.0;
  TrainHyper hyper;
  TrainingMeta meta;
  std::optional<int> degenerate_class;  // set when the training labels were single-class
  bool abstains = false;                // trained on no data; never votes

  std::size_t dim() const { return weights.size(); }

  static BinaryModel abstaining(std::size_t dim, const TrainHyper& hyper) {
    BinaryModel m;
    m.weights.assign(dim, 0.0);
    m.hyper = hyper;
    m.abstains = true;
    return m;
  }

  bool operator==(const BinaryModel&) const = default;
};

// Row-major embeddings aligned with a dataset's record order.
class EmbeddingMatrix {
public:
  EmbeddingMatrix() = default;
  explicit EmbeddingMatrix(std::size_t dim) : dim_(dim) {}

  std::size_t rows() const { return dim_ == 0 ? 0 : data_.size() / dim_; }
  std::size_t dim() const { return dim_; }

  std::span<const double> row(std::size_t i) const { return {data_.data() + i * dim_, dim_}; }

  void push_back(std::span<const double> v) {
    if (v.size() != dim_) throw UsageError("embedding dimension mismatch");
    data_.insert(data_.end(), v.begin(), v.end());
  }

  EmbeddingMatrix select(std::span<const std::size_t> rows) const {
    EmbeddingMatrix out(dim_);
    out.data_.reserve(rows.size() * dim_);
    for (std::size_t r : rows) out.push_back(row(r));
    return out;
  }

private:
  std::size_t dim_ = 0;
  std::vector<double> data_;
};

inline EmbeddingMatrix embed_dataset(const Dataset& d, const EmbedConfig& cfg) {
  EmbeddingMatrix m(cfg.dim);
  for (const auto& r : d.records) m.push_back(embed_record(r, cfg).values);
  return m;
}

inline std::vector<int> task_labels(const Dataset& d, const std::string& task) {
  std::vector<int> y;
  y.reserve(d.size());
  for (const auto& r : d.records) {
    auto it = r.labels.find(task);
    if (it == r.labels.end()) throw DataError("record '" + r.id + "' has no label for task '" + task + "'");
    y.push_back(it->second);
  }
  return y;
}

inline double sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

// log(1 + e^z) without overflow.
inline double softplus(double z) { return std::max(z, 0.0) + std::log1p(std::exp(-std::fabs(z))); }

inline double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

// Mean (class-weighted) logistic loss plus (l2 / 2) * |w|^2. The bias is not
// regularized.
inline double logistic_loss(std::span<const double> w, double b, const EmbeddingMatrix& x, std::span<const int> y,
                            double l2, double positive_weight = 1.0) {
  double loss = 0.0;
  for (std::size_t i = 0; i < x.rows(); ++i) {
    const double z = dot(w, x.row(i)) + b;
    const double c = y[i] == 1 ? positive_weight : 1.0;
    loss += c * (softplus(z) - static_cast<double>(y[i]) * z);
  }
  loss /= static_cast<double>(x.rows());
  return loss + 0.5 * l2 * dot(w, w);
}

// Gradient of logistic_loss over the given rows (all rows when empty).
inline void logistic_gradient(std::span<const double> w, double b, const EmbeddingMatrix& x, std::span<const int> y,
                              double l2, double positive_weight, std::span<const std::size_t> rows,
                              std::span<double> grad_w, double& grad_b) {
  std::fill(grad_w.begin(), grad_w.end(), 0.0);
  grad_b = 0.0;
  const std::size_t count = rows.empty() ? x.rows() : rows.size();
  for (std::size_t k = 0; k < count; ++k) {
    const std::size_t i = rows.empty() ? k : rows[k];
    const auto xi = x.row(i);
    const double c = y[i] == 1 ? positive_weight : 1.0;
    const double err = c * (sigmoid(dot(w, xi) + b) - static_cast<double>(y[i]));
    for (std::size_t j = 0; j < xi.size(); ++j) grad_w[j] += err * xi[j];
    grad_b += err;
  }
  const double inv = 1.0 / static_cast<double>(count);
  for (std::size_t j = 0; j < grad_w.size(); ++j) grad_w[j] = grad_w[j] * inv + l2 * w[j];
  grad_b *= inv;
}

// Fits weights with `hyper.epochs` passes of shuffled mini-batch descent.
// Single-class labels give a degenerate model that predicts that class with
// certainty. When `loss_trace` is given, the full-data loss after each epoch
// is appended to it.
inline BinaryModel train_binary(const EmbeddingMatrix& x, std::span<const int> y, const TrainHyper& hyper,
                                std::vector<double>* loss_trace = nullptr) {
  hyper.check();
  if (x.rows() != y.size()) throw UsageError("embedding rows and labels differ in count");
  if (x.rows() == 0) throw DataError("cannot train on zero examples");
  BinaryModel m;
  m.hyper = hyper;
  m.weights.assign(x.dim(), 0.0);
  m.meta.n = x.rows();
  for (int v : y) {
    if (v != 0 && v != 1) throw DataError("labels must be 0 or 1");
  }
  const auto positives = static_cast<std::size_t>(std::count(y.begin(), y.end(), 1));
  if (positives == 0 || positives == y.size()) {
    m.degenerate_class = positives == 0 ? 0 : 1;
    return m;
  }

  const std::size_t n = x.rows();
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  std::vector<double> grad(x.dim());
  double grad_b = 0.0;
  Rng rng(hyper.seed);
  for (int epoch = 0; epoch < hyper.epochs; ++epoch) {
    if (hyper.batch < n) rng.shuffle(order);
    for (std::size_t start = 0; start < n; start += hyper.batch) {
      const std::size_t end = std::min(n, start + hyper.batch);
      logistic_gradient(m.weights, m.bias, x, y, hyper.l2, hyper.positive_weight,
                        std::span<const std::size_t>(order).subspan(start, end - start), grad, grad_b);
      for (std::size_t j = 0; j < grad.size(); ++j) m.weights[j] -= hyper.learning_rate * grad[j];
      m.bias -= hyper.learning_rate * grad_b;
    }
    if (loss_trace) loss_trace->push_back(logistic_loss(m.weights, m.bias, x, y, hyper.l2, hyper.positive_weight));
  }
  m.meta.epochs_run = hyper.epochs;
  m.meta.final_loss = logistic_loss(m.weights, m.bias, x, y, hyper.l2, hyper.positive_weight);
  return m;
}

inline double predict_proba(const BinaryModel& m, std::span<const double> x) {
  if (m.abstains) throw UsageError("abstaining model has no predictions");
  if (x.size() != m.dim()) throw UsageError("embedding dimension mismatch");
  if (m.degenerate_class) return *m.degenerate_class == 1 ? 1.0 : 0.0;
  return sigmoid(dot(m.weights, x) + m.bias);
}

// 1 iff the probability strictly exceeds the threshold.
inline int predict(const BinaryModel& m, std::span<const double> x, double threshold) {
  return predict_proba(m, x) > threshold ? 1 : 0;
}

inline int predict(const BinaryModel& m, std::span<const double> x) { return predict(m, x, m.hyper.threshold); }

// Base prediction set for a dataset whose embeddings are `x` (same order).
inline PredictionSet predict_set(const BinaryModel& m, const Dataset& d, const EmbeddingMatrix& x,
                                 const std::string& task) {
  if (x.rows() != d.size()) throw UsageError("embedding rows and records differ in count");
  PredictionSet out{task, PredictionKind::base, m.hyper.threshold, {}};
  for (std::size_t i = 0; i < d.size(); ++i) {
    const double p = predict_proba(m, x.row(i));
    out.entries.emplace(d.records[i].id, Prediction{p, p > m.hyper.threshold ? 1 : 0});
  }
  return out;
}

// Independent heads over one shared embedding space.
struct MultitaskModel {
  std::vector<std::string> tasks;
  std::map<std::string, BinaryModel> heads;
  EmbedConfig embed;

  const BinaryModel& head(const std::string& task) const {
    auto it = heads.find(task);
    if (it == heads.end()) throw UsageError("model has no head for task '" + task + "'");
    return it->second;
  }
};

inline MultitaskModel train_multitask(const EmbeddingMatrix& x, const Dataset& d, const TrainHyper& hyper,
                                      const EmbedConfig& embed) {
  MultitaskModel m{d.tasks, {}, embed};
  for (const auto& task : d.tasks) m.heads.emplace(task, train_binary(x, task_labels(d, task), hyper));
  return m;
}

struct TaskMetrics {
  double f1 = 0.0;
  double macro_f1 = 0.0;
  Rate auroc;  // undefined for single-class labels
  Rate auprc;  // undefined without positives
};

inline TaskMetrics task_metrics(const PredictionSet& preds, const Dataset& d) {
  const auto c = scored_columns(preds, d);
  TaskMetrics t;
  t.f1 = f1_score(c.predicted, c.truth);
  t.macro_f1 = macro_f1_score(c.predicted, c.truth);
  const auto pos = std::count(c.truth.begin(), c.truth.end(), 1);
  if (pos > 0 && static_cast<std::size_t>(pos) < c.truth.size()) t.auroc = auroc(c.probability, c.truth);
  if (pos > 0) t.auprc = auprc(c.probability, c.truth);
  return t;
}

inline std::map<std::string, TaskMetrics> evaluate(const MultitaskModel& m, const Dataset& d,
                                                   const EmbeddingMatrix& x) {
  std::map<std::string, TaskMetrics> out;
  for (const auto& task : m.tasks) out.emplace(task, task_metrics(predict_set(m.head(task), d, x, task), d));
  return out;
}

inline std::map<std::string, TaskMetrics> evaluate(const MultitaskModel& m, const Dataset& d) {
  return evaluate(m, d, embed_dataset(d, m.embed));
}

// ---------------------------------------------------------------------------
// Artifact files

inline constexpr std::string_view kModelFormat = "fairlens-model/1";

inline json hyper_to_json(const TrainHyper& h) {
  return json{{"learning_rate", h.learning_rate}, {"epochs", h.epochs}, {"l2", h.l2},
              {"batch", h.batch},                 {"threshold", h.threshold}, {"seed", h.seed},
              {"positive_weight", h.positive_weight}};
}

inline TrainHyper hyper_from_json(const json& j, TrainHyper h = {}) {
  h.learning_rate = j.value("learning_rate", h.learning_rate);
  h.epochs = j.value("epochs", h.epochs);
  h.l2 = j.value("l2", h.l2);
  h.batch = j.value("batch", h.batch);
  h.threshold = j.value("threshold", h.threshold);
  h.seed = j.value("seed", h.seed);
  h.positive_weight = j.value("positive_weight", h.positive_weight);
  h.check();
  return h;
}

inline json binary_model_to_json(const BinaryModel& m) {
  return json{{"weights", m.weights},
              {"bias", m.bias},
              {"hyper", hyper_to_json(m.hyper)},
              {"training_meta", {{"n", m.meta.n}, {"epochs_run", m.meta.epochs_run}, {"final_loss", m.meta.final_loss}}},
              {"degenerate_class", m.degenerate_class ? json(*m.degenerate_class) : json(nullptr)},
              {"abstains", m.abstains}};
}

inline BinaryModel binary_model_from_json(const json& j) {
  try {
    BinaryModel m;
    m.weights = j.at("weights").get<std::vector<double>>();
    m.bias = j.at("bias").get<double>();
    m.hyper = hyper_from_json(j.at("hyper"));
    const auto& meta = j.at("training_meta");
    m.meta = {meta.at("n").get<std::size_t>(), meta.at("epochs_run").get<int>(), meta.at("final_loss").get<double>()};
    if (!j.at("degenerate_class").is_null()) m.degenerate_class = j["degenerate_class"].get<int>();
    m.abstains = j.value("abstains", false);
    return m;
  } catch (const json::exception& e) {
    throw DataError(std::string("malformed model: ") + e.what());
  }
}

inline json model_to_json(const MultitaskModel& m) {
  json heads = json::object();
  for (const auto& [task, head] : m.heads) heads[task] = binary_model_to_json(head);
  return json{{"format", kModelFormat}, {"embedder", embed_config_to_json(m.embed)}, {"tasks", m.tasks},
              {"heads", std::move(heads)}};
}

inline MultitaskModel model_from_json(const json& j) {
  if (j.value("format", "") != kModelFormat) throw DataError("unsupported model format");
  MultitaskModel m;
  try {
    m.embed = embed_config_from_json(j.at("embedder"));
    m.tasks = j.at("tasks").get<std::vector<std::string>>();
    for (const auto& task : m.tasks) m.heads.emplace(task, binary_model_from_json(j.at("heads").at(task)));
  } catch (const json::exception& e) {
    throw DataError(std::string("malformed model: ") + e.what());
  }
  for (const auto& [task, head] : m.heads) {
    if (head.dim() != m.embed.dim) throw DataError("head '" + task + "' does not match the embedding dimension");
  }
  return m;
}

}  // namespace fairlens
