#include "vitac/classify.hpp"

#include "vitac/error.hpp"
#include "vitac/parallel.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <random>

namespace vitac {

const char* to_string(KernelKind kind) noexcept {
  switch (kind) {
    case KernelKind::linear: return "linear";
    case KernelKind::rbf: return "rbf";
    case KernelKind::gfk_linear: return "gfk_linear";
    case KernelKind::gfk_rbf: return "gfk_rbf";
  }
  return "?";
}

KernelKind parse_kernel_kind(const std::string& text) {
  std::string low;
  for (char c : text) low += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  if (low == "linear") return KernelKind::linear;
  if (low == "rbf") return KernelKind::rbf;
  if (low == "gfk_linear") return KernelKind::gfk_linear;
  if (low == "gfk_rbf") return KernelKind::gfk_rbf;
  fail(ErrorCode::Parse, "unknown kernel '" + text + "'");
}

Eigen::Index TrainedModel::dim() const noexcept {
  if (algorithm == Algorithm::knn) return vectors.cols();
  if (kernel.model) return kernel.model->dim();
  return machines.empty() ? 0 : machines.front().support.cols();
}

namespace {

std::vector<int> distinct_sorted(const std::vector<int>& labels) {
  std::vector<int> out(labels);
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

void check_labeled(const FeatureSet& data) {
  require(data.size() > 0, ErrorCode::InvalidArgument, "empty training set");
  require(data.labeled(), ErrorCode::InvalidArgument, "training set needs one label per row");
}

const GfkModel& require_model(const std::shared_ptr<const GfkModel>& model, Eigen::Index dim) {
  require(model != nullptr, ErrorCode::InvalidArgument, "GFK metric needs a fitted model");
  if (model->dim() != dim) fail(ErrorCode::DimensionMismatch, "GFK model dimension mismatch");
  return *model;
}

}  // namespace

// ---------------------------------------------------------------------------
// kNN

TrainedModel knn_fit(const FeatureSet& data, int k, const MetricSpec& metric) {
  check_labeled(data);
  require(k >= 1, ErrorCode::InvalidArgument, "k must be >= 1");
  TrainedModel m;
  m.algorithm = Algorithm::knn;
  m.vectors = data.vectors;
  m.labels = data.labels;
  m.classes = distinct_sorted(data.labels);
  m.k = k;
  m.metric = metric;
  if (metric.kind == MetricKind::gfk) {
    m.mapped = require_model(metric.model, data.dim()).embed(data.vectors);
  } else {
    m.mapped = data.vectors;
  }
  return m;
}

int knn_classify(const TrainedModel& model, const Eigen::VectorXd& query) {
  require(model.algorithm == Algorithm::knn, ErrorCode::InvalidArgument, "not a kNN model");
  require(!model.labels.empty(), ErrorCode::InvalidArgument, "empty kNN model");
  if (query.size() != model.vectors.cols()) {
    fail(ErrorCode::DimensionMismatch, "query length " + std::to_string(query.size()) +
                                           " != model dimension " +
                                           std::to_string(model.vectors.cols()));
  }
  const Eigen::VectorXd q =
      model.metric.kind == MetricKind::gfk ? model.metric.model->embed(query) : query;
  const Eigen::Index n = model.mapped.rows();
  std::vector<std::pair<double, Eigen::Index>> dist(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) {
    const Eigen::VectorXd diff = model.mapped.row(i).transpose() - q;
    dist[static_cast<std::size_t>(i)] = {diff.norm(), i};
  }
  const auto k = static_cast<std::size_t>(std::min<Eigen::Index>(model.k, n));
  // (distance, index) pairs order exactly as the tie rule demands.
  std::partial_sort(dist.begin(), dist.begin() + static_cast<std::ptrdiff_t>(k), dist.end());

  std::map<int, std::pair<int, double>> votes;
  for (std::size_t i = 0; i < k; ++i) {
    auto& v = votes[model.labels[static_cast<std::size_t>(dist[i].second)]];
    ++v.first;
    v.second += dist[i].first;
  }
  int best = votes.begin()->first;
  auto best_vote = votes.begin()->second;
  for (const auto& [cls, v] : votes) {
    if (v.first > best_vote.first || (v.first == best_vote.first && v.second < best_vote.second)) {
      best = cls;
      best_vote = v;
    }
  }
  return best;
}

// ---------------------------------------------------------------------------
// SVM

namespace {

bool is_gfk(KernelKind k) { return k == KernelKind::gfk_linear || k == KernelKind::gfk_rbf; }
bool is_rbf(KernelKind k) { return k == KernelKind::rbf || k == KernelKind::gfk_rbf; }

double kernel_value(bool rbf, double gamma, const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  if (!rbf) return a.dot(b);
  return std::exp(-gamma * (a - b).squaredNorm());
}

Eigen::MatrixXd gram(bool rbf, double gamma, const Eigen::MatrixXd& rows) {
  Eigen::MatrixXd k = rows * rows.transpose();
  if (rbf) {
    const Eigen::VectorXd sq = rows.rowwise().squaredNorm();
    for (Eigen::Index j = 0; j < k.cols(); ++j)
      for (Eigen::Index i = 0; i < k.rows(); ++i) {
        const double d2 = std::max(0.0, sq[i] + sq[j] - 2.0 * k(i, j));
        k(i, j) = std::exp(-gamma * d2);
      }
    k.diagonal().setOnes();
  }
  return k;
}

struct SmoResult {
  Eigen::VectorXd alpha;
  double rho = 0.0;
  int iterations = 0;
};

// Dual soft-margin SVM with second-order working-set selection.
SmoResult smo(const Eigen::MatrixXd& k, const Eigen::VectorXd& y, double C, double tol) {
  const Eigen::Index n = y.size();
  constexpr double kTau = 1e-12;
  Eigen::VectorXd alpha = Eigen::VectorXd::Zero(n);
  Eigen::VectorXd grad = -Eigen::VectorXd::Ones(n);
  auto q = [&](Eigen::Index i, Eigen::Index j) { return y[i] * y[j] * k(i, j); };
  auto in_up = [&](Eigen::Index t) { return (y[t] > 0 && alpha[t] < C) || (y[t] < 0 && alpha[t] > 0); };
  auto in_low = [&](Eigen::Index t) { return (y[t] > 0 && alpha[t] > 0) || (y[t] < 0 && alpha[t] < C); };

  const long max_iter = std::max<long>(10000000, 100 * static_cast<long>(n));
  SmoResult out;
  long iter = 0;
  for (; iter < max_iter; ++iter) {
    double gmax = -std::numeric_limits<double>::infinity();
    Eigen::Index i = -1;
    for (Eigen::Index t = 0; t < n; ++t) {
      if (in_up(t) && -y[t] * grad[t] > gmax) {
        gmax = -y[t] * grad[t];
        i = t;
      }
    }
    double gmin = std::numeric_limits<double>::infinity();
    Eigen::Index j = -1;
    double best = std::numeric_limits<double>::infinity();
    for (Eigen::Index t = 0; t < n; ++t) {
      if (!in_low(t)) continue;
      const double v = -y[t] * grad[t];
      gmin = std::min(gmin, v);
      if (i < 0) continue;
      const double b = gmax - v;
      if (b > 0) {
        double a = k(i, i) + k(t, t) - 2.0 * k(i, t);
        if (a <= 0) a = kTau;
        const double obj = -(b * b) / a;
        if (obj < best) {
          best = obj;
          j = t;
        }
      }
    }
    if (i < 0 || j < 0 || gmax - gmin < tol) break;

    const double ai = alpha[i], aj = alpha[j];
    if (y[i] != y[j]) {
      double quad = k(i, i) + k(j, j) + 2.0 * q(i, j);
      if (quad <= 0) quad = kTau;
      const double delta = (-grad[i] - grad[j]) / quad;
      const double diff = alpha[i] - alpha[j];
      alpha[i] += delta;
      alpha[j] += delta;
      if (diff > 0) {
        if (alpha[j] < 0) { alpha[j] = 0; alpha[i] = diff; }
      } else {
        if (alpha[i] < 0) { alpha[i] = 0; alpha[j] = -diff; }
      }
      if (diff > 0) {
        if (alpha[i] > C) { alpha[i] = C; alpha[j] = C - diff; }
      } else {
        if (alpha[j] > C) { alpha[j] = C; alpha[i] = C + diff; }
      }
    } else {
      double quad = k(i, i) + k(j, j) - 2.0 * q(i, j);
      if (quad <= 0) quad = kTau;
      const double delta = (grad[i] - grad[j]) / quad;
      const double sum = alpha[i] + alpha[j];
      alpha[i] -= delta;
      alpha[j] += delta;
      if (sum > C) {
        if (alpha[i] > C) { alpha[i] = C; alpha[j] = sum - C; }
      } else {
        if (alpha[j] < 0) { alpha[j] = 0; alpha[i] = sum; }
      }
      if (sum > C) {
        if (alpha[j] > C) { alpha[j] = C; alpha[i] = sum - C; }
      } else {
        if (alpha[i] < 0) { alpha[i] = 0; alpha[j] = sum; }
      }
    }
    const double di = alpha[i] - ai, dj = alpha[j] - aj;
    for (Eigen::Index t = 0; t < n; ++t) grad[t] += q(t, i) * di + q(t, j) * dj;
  }
  out.iterations = static_cast<int>(iter);

  // rho: mean of y*grad over free variables, else the midpoint of the bounds.
  double ub = std::numeric_limits<double>::infinity(), lb = -ub, sum = 0.0;
  int free = 0;
  for (Eigen::Index t = 0; t < n; ++t) {
    const double yg = y[t] * grad[t];
    if (alpha[t] >= C) {
      if (y[t] < 0) ub = std::min(ub, yg); else lb = std::max(lb, yg);
    } else if (alpha[t] <= 0) {
      if (y[t] > 0) ub = std::min(ub, yg); else lb = std::max(lb, yg);
    } else {
      ++free;
      sum += yg;
    }
  }
  out.rho = free > 0 ? sum / free : 0.5 * (ub + lb);
  out.alpha = alpha.cwiseMax(0.0).cwiseMin(C);
  return out;
}

Eigen::MatrixXd map_rows(const KernelSpec& spec, const Eigen::MatrixXd& rows) {
  if (!is_gfk(spec.kind)) return rows;
  return require_model(spec.model, rows.cols()).embed(rows);
}

}  // namespace

TrainedModel svm_train(const FeatureSet& data, const KernelSpec& kernel, double C, double tol) {
  check_labeled(data);
  require(C > 0 && std::isfinite(C), ErrorCode::InvalidArgument, "C must be > 0");
  require(tol > 0, ErrorCode::InvalidArgument, "tol must be > 0");
  TrainedModel m;
  m.algorithm = Algorithm::svm;
  m.classes = distinct_sorted(data.labels);
  if (m.classes.size() < 2) fail(ErrorCode::SingleClass, "SVM training needs at least two classes");
  m.kernel = kernel;
  m.C = C;
  m.tol = tol;

  const Eigen::MatrixXd rows = map_rows(kernel, data.vectors);
  const bool rbf = is_rbf(kernel.kind);
  if (rbf) {
    if (m.kernel.gamma <= 0) {
      const double spread = (rows.rowwise() - rows.colwise().mean()).rowwise().squaredNorm().mean();
      m.kernel.gamma = spread > 0 ? 1.0 / spread : 1.0;
    }
  }
  const Eigen::MatrixXd k = gram(rbf, m.kernel.gamma, rows);

  std::vector<std::pair<int, int>> pairs;
  for (std::size_t a = 0; a < m.classes.size(); ++a)
    for (std::size_t b = a + 1; b < m.classes.size(); ++b) pairs.emplace_back(m.classes[a], m.classes[b]);
  m.machines.resize(pairs.size());

  parallel_for(pairs.size(), [&](std::size_t p) {
    const auto [pos, neg] = pairs[p];
    std::vector<Eigen::Index> idx;
    for (Eigen::Index i = 0; i < data.size(); ++i) {
      const int l = data.labels[static_cast<std::size_t>(i)];
      if (l == pos || l == neg) idx.push_back(i);
    }
    const auto n = static_cast<Eigen::Index>(idx.size());
    Eigen::MatrixXd sub(n, n);
    Eigen::VectorXd y(n);
    for (Eigen::Index a = 0; a < n; ++a) {
      y[a] = data.labels[static_cast<std::size_t>(idx[a])] == pos ? 1.0 : -1.0;
      for (Eigen::Index b = 0; b < n; ++b) sub(a, b) = k(idx[a], idx[b]);
    }
    const SmoResult r = smo(sub, y, C, tol);

    BinaryMachine& mach = m.machines[p];
    mach.positive = pos;
    mach.negative = neg;
    mach.rho = r.rho;
    mach.iterations = r.iterations;
    std::vector<Eigen::Index> sv;
    for (Eigen::Index a = 0; a < n; ++a)
      if (r.alpha[a] > 0) sv.push_back(a);
    mach.support.resize(static_cast<Eigen::Index>(sv.size()), rows.cols());
    mach.coef.resize(static_cast<Eigen::Index>(sv.size()));
    mach.alpha.resize(static_cast<Eigen::Index>(sv.size()));
    for (std::size_t s = 0; s < sv.size(); ++s) {
      const auto e = static_cast<Eigen::Index>(s);
      mach.support.row(e) = rows.row(idx[sv[s]]);
      mach.alpha[e] = r.alpha[sv[s]];
      mach.coef[e] = r.alpha[sv[s]] * y[sv[s]];
    }
  });
  return m;
}

std::vector<double> svm_decision_values(const TrainedModel& model, const Eigen::VectorXd& query) {
  require(model.algorithm == Algorithm::svm, ErrorCode::InvalidArgument, "not an SVM model");
  const bool gfk = is_gfk(model.kernel.kind);
  if (gfk) {
    require_model(model.kernel.model, query.size());
  } else if (!model.machines.empty() && query.size() != model.machines.front().support.cols()) {
    fail(ErrorCode::DimensionMismatch, "query dimension does not match the model");
  }
  const Eigen::VectorXd x = gfk ? model.kernel.model->embed(query) : query;
  const bool rbf = is_rbf(model.kernel.kind);
  std::vector<double> out;
  out.reserve(model.machines.size());
  for (const auto& mach : model.machines) {
    double f = 0.0;
    for (Eigen::Index s = 0; s < mach.support.rows(); ++s)
      f += mach.coef[s] * kernel_value(rbf, model.kernel.gamma, mach.support.row(s).transpose(), x);
    out.push_back(f - mach.rho);
  }
  return out;
}

int svm_predict(const TrainedModel& model, const Eigen::VectorXd& query) {
  const std::vector<double> dec = svm_decision_values(model, query);
  std::map<int, int> votes;
  for (int c : model.classes) votes[c] = 0;
  for (std::size_t p = 0; p < dec.size(); ++p) {
    const auto& mach = model.machines[p];
    ++votes[dec[p] > 0 ? mach.positive : mach.negative];
  }
  int best = model.classes.front();
  for (const auto& [cls, v] : votes)
    if (v > votes[best]) best = cls;
  return best;
}

int predict(const TrainedModel& model, const Eigen::VectorXd& query) {
  return model.algorithm == Algorithm::knn ? knn_classify(model, query)
                                           : svm_predict(model, query);
}

// ---------------------------------------------------------------------------
// Evaluation

Evaluation score(const std::vector<int>& truth, const std::vector<int>& predictions,
                 std::vector<int> classes) {
  require(truth.size() == predictions.size(), ErrorCode::DimensionMismatch,
          "prediction count differs from label count");
  if (truth.empty()) fail(ErrorCode::EmptyTestSet, "nothing to evaluate");
  classes.insert(classes.end(), truth.begin(), truth.end());
  classes.insert(classes.end(), predictions.begin(), predictions.end());
  classes = distinct_sorted(classes);

  std::map<int, Eigen::Index> pos;
  for (std::size_t i = 0; i < classes.size(); ++i) pos[classes[i]] = static_cast<Eigen::Index>(i);
  const auto c = static_cast<Eigen::Index>(classes.size());
  Evaluation ev;
  ev.predictions = predictions;
  ev.confusion.classes = classes;
  ev.confusion.counts = Eigen::MatrixXi::Zero(c, c);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    ++ev.confusion.counts(pos[predictions[i]], pos[truth[i]]);
    if (predictions[i] == truth[i]) ++correct;
  }
  ev.confusion.fractions = Eigen::MatrixXd::Zero(c, c);
  for (Eigen::Index j = 0; j < c; ++j) {
    const int total = ev.confusion.counts.col(j).sum();
    if (total > 0) ev.confusion.fractions.col(j) = ev.confusion.counts.col(j).cast<double>() / total;
  }
  ev.accuracy = static_cast<double>(correct) / static_cast<double>(truth.size());
  return ev;
}

Evaluation evaluate(const TrainedModel& model, const FeatureSet& test) {
  if (test.size() == 0) fail(ErrorCode::EmptyTestSet, "test set is empty");
  require(test.labeled(), ErrorCode::InvalidArgument, "test set needs labels");
  std::vector<int> pred(static_cast<std::size_t>(test.size()));
  parallel_for(pred.size(), [&](std::size_t i) {
    pred[i] = predict(model, test.vectors.row(static_cast<Eigen::Index>(i)).transpose());
  });
  return score(test.labels, pred, model.classes);
}

std::vector<int> stratified_folds(const std::vector<int>& labels, int k, std::uint64_t seed) {
  require(k >= 2, ErrorCode::InvalidArgument, "k-fold needs k >= 2");
  if (labels.size() < static_cast<std::size_t>(k)) {
    fail(ErrorCode::TooFewExamples, std::to_string(labels.size()) + " examples for " +
                                        std::to_string(k) + " folds");
  }
  std::mt19937_64 rng(seed);
  std::vector<int> fold(labels.size(), -1);
  std::size_t dealt = 0;
  for (int cls : distinct_sorted(labels)) {
    std::vector<std::size_t> members;
    for (std::size_t i = 0; i < labels.size(); ++i)
      if (labels[i] == cls) members.push_back(i);
    std::shuffle(members.begin(), members.end(), rng);
    for (std::size_t m : members) fold[m] = static_cast<int>(dealt++ % static_cast<std::size_t>(k));
  }
  return fold;
}

CrossValidation kfold_cv(const FeatureSet& data, int k, const Trainer& trainer, std::uint64_t seed) {
  require(data.labeled(), ErrorCode::InvalidArgument, "cross-validation needs labels");
  CrossValidation cv;
  cv.fold_of = stratified_folds(data.labels, k, seed);
  for (int f = 0; f < k; ++f) {
    FeatureSet train, test;
    train.domain = test.domain = data.domain;
    std::vector<Eigen::Index> tr, te;
    for (std::size_t i = 0; i < cv.fold_of.size(); ++i)
      (cv.fold_of[i] == f ? te : tr).push_back(static_cast<Eigen::Index>(i));
    train.vectors = data.vectors(tr, Eigen::all);
    test.vectors = data.vectors(te, Eigen::all);
    for (auto i : tr) train.labels.push_back(data.labels[static_cast<std::size_t>(i)]);
    for (auto i : te) test.labels.push_back(data.labels[static_cast<std::size_t>(i)]);
    cv.fold_accuracy.push_back(evaluate(trainer(train), test).accuracy);
  }
  cv.mean_accuracy = std::accumulate(cv.fold_accuracy.begin(), cv.fold_accuracy.end(), 0.0) /
                     static_cast<double>(k);
  return cv;
}

}  // namespace vitac
