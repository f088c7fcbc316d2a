#include "bioage/regressor.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <memory>
#include <sstream>
#include <tuple>

#include "bioage/rng.hpp"
#include "bioage/text.hpp"

namespace bioage {

namespace {

constexpr double kAdamBeta1 = 0.9;
constexpr double kAdamBeta2 = 0.999;
constexpr double kAdamEps = 1e-8;
constexpr double kScaleFloor = 1e-12;

void validate_config(const RegressorConfig& config) {
  for (int h : config.hidden_layer_sizes) {
    if (h <= 0) throw std::invalid_argument("regressor: hidden layer sizes must be positive");
  }
  if (!(config.learning_rate > 0.0)) {
    throw std::invalid_argument("regressor: learning_rate must be positive");
  }
  if (config.epochs <= 0) throw std::invalid_argument("regressor: epochs must be positive");
  if (config.batch_size <= 0) throw std::invalid_argument("regressor: batch_size must be positive");
  if (!(config.l2_weight >= 0.0)) {
    throw std::invalid_argument("regressor: l2_weight must be nonnegative");
  }
}

// Training is a pure function of the sample *set*: order is normalized
// before anything touches an accumulator or the RNG.
std::vector<ChunkSample> canonicalize(const std::vector<ChunkSample>& samples) {
  std::vector<ChunkSample> out = samples;
  std::stable_sort(out.begin(), out.end(), [](const ChunkSample& a, const ChunkSample& b) {
    return std::tie(a.patient_id, a.scan_id, a.chunk_index) <
           std::tie(b.patient_id, b.scan_id, b.chunk_index);
  });
  return out;
}

void validate_samples(const std::vector<ChunkSample>& samples) {
  if (samples.empty()) throw std::invalid_argument("regressor: no training samples");
  const std::size_t dim = samples.front().features.size();
  for (const ChunkSample& s : samples) {
    if (s.features.size() != dim) {
      throw std::invalid_argument("regressor: inconsistent feature dimension");
    }
    if (!std::isfinite(s.ca_label)) throw std::invalid_argument("regressor: non-finite label");
    for (double f : s.features) {
      if (!std::isfinite(f)) throw std::invalid_argument("regressor: non-finite feature");
    }
  }
}

// Model input = features ++ gender.
void fill_input(const ChunkSample& s, std::vector<double>& x) {
  x.assign(s.features.begin(), s.features.end());
  x.push_back(static_cast<double>(s.gender));
}

void standardize(const RegressorModel& m, std::vector<double>& x) {
  for (std::size_t j = 0; j < x.size(); ++j) {
    x[j] = (x[j] - m.input_mean[j]) / m.input_scale[j];
  }
}

// Dense forward pass. activations[0] is the standardized input;
// activations[l+1] holds layer l's output after ReLU (identity on the last
// layer). preacts[l] holds layer l's pre-activation.
void forward(const RegressorModel& m, const std::vector<double>& input,
             std::vector<std::vector<double>>& activations,
             std::vector<std::vector<double>>& preacts) {
  const std::size_t layers = m.weights.size();
  activations.resize(layers + 1);
  preacts.resize(layers);
  activations[0] = input;
  for (std::size_t l = 0; l < layers; ++l) {
    const int rows = m.layer_sizes[l + 1];
    const int cols = m.layer_sizes[l];
    preacts[l].assign(rows, 0.0);
    const std::vector<double>& in = activations[l];
    const double* w = m.weights[l].data();
    for (int r = 0; r < rows; ++r) {
      double acc = m.biases[l][r];
      const double* wr = w + static_cast<std::size_t>(r) * cols;
      for (int c = 0; c < cols; ++c) acc += wr[c] * in[c];
      preacts[l][r] = acc;
    }
    activations[l + 1] = preacts[l];
    if (l + 1 < layers) {
      for (double& v : activations[l + 1]) v = v > 0.0 ? v : 0.0;
    }
  }
}

struct Workspace {
  std::vector<double> input;
  std::vector<std::vector<double>> activations;
  std::vector<std::vector<double>> preacts;
  std::vector<std::vector<double>> deltas;
};

double raw_predict(const RegressorModel& m, const ChunkSample& s, Workspace& ws) {
  fill_input(s, ws.input);
  standardize(m, ws.input);
  forward(m, ws.input, ws.activations, ws.preacts);
  return ws.activations.back()[0] + m.label_offset;
}

// Backpropagates d(loss)/d(prediction) = g into the gradient accumulators.
void backward(const RegressorModel& m, Workspace& ws, double g,
              std::vector<std::vector<double>>& grad_w,
              std::vector<std::vector<double>>& grad_b) {
  const std::size_t layers = m.weights.size();
  ws.deltas.resize(layers);
  ws.deltas[layers - 1].assign(1, g);
  for (std::size_t l = layers; l-- > 0;) {
    const int rows = m.layer_sizes[l + 1];
    const int cols = m.layer_sizes[l];
    const std::vector<double>& delta = ws.deltas[l];
    const std::vector<double>& in = ws.activations[l];
    for (int r = 0; r < rows; ++r) {
      const double d = delta[r];
      if (d == 0.0) continue;
      double* gw = grad_w[l].data() + static_cast<std::size_t>(r) * cols;
      for (int c = 0; c < cols; ++c) gw[c] += d * in[c];
      grad_b[l][r] += d;
    }
    if (l == 0) break;
    std::vector<double>& prev = ws.deltas[l - 1];
    prev.assign(cols, 0.0);
    const double* w = m.weights[l].data();
    for (int r = 0; r < rows; ++r) {
      const double d = delta[r];
      if (d == 0.0) continue;
      const double* wr = w + static_cast<std::size_t>(r) * cols;
      for (int c = 0; c < cols; ++c) prev[c] += d * wr[c];
    }
    // ReLU gate on the previous layer's pre-activation.
    for (int c = 0; c < cols; ++c) {
      if (ws.preacts[l - 1][c] <= 0.0) prev[c] = 0.0;
    }
  }
}

double l2_penalty(const RegressorModel& m) {
  if (m.config.l2_weight == 0.0) return 0.0;
  double sum = 0.0;
  for (const auto& layer : m.weights) {
    for (double w : layer) sum += w * w;
  }
  return 0.5 * m.config.l2_weight * sum;
}

double dataset_mae(const RegressorModel& m, const std::vector<ChunkSample>& samples,
                   Workspace& ws) {
  double sum = 0.0;
  for (const ChunkSample& s : samples) {
    sum += std::abs(raw_predict(m, s, ws) - s.ca_label);
  }
  return sum / static_cast<double>(samples.size());
}

}  // namespace

std::size_t RegressorModel::parameter_count() const {
  std::size_t n = 0;
  for (const auto& w : weights) n += w.size();
  for (const auto& b : biases) n += b.size();
  return n;
}

RegressorModel train(const std::vector<ChunkSample>& samples, const RegressorConfig& config) {
  validate_config(config);
  const std::vector<ChunkSample> data = canonicalize(samples);
  validate_samples(data);

  const int in_dim = static_cast<int>(data.front().features.size()) + 1;
  RegressorModel model;
  model.config = config;
  model.config.kind = RegressorKind::mlp;
  model.layer_sizes.push_back(in_dim);
  for (int h : config.hidden_layer_sizes) model.layer_sizes.push_back(h);
  model.layer_sizes.push_back(1);

  // Input z-scoring and label centering, frozen from the training set.
  model.input_mean.assign(in_dim, 0.0);
  model.input_scale.assign(in_dim, 1.0);
  {
    std::vector<double> x;
    std::vector<double> sum(in_dim, 0.0);
    std::vector<double> sumsq(in_dim, 0.0);
    double label_sum = 0.0;
    for (const ChunkSample& s : data) {
      fill_input(s, x);
      for (int j = 0; j < in_dim; ++j) {
        sum[j] += x[j];
        sumsq[j] += x[j] * x[j];
      }
      label_sum += s.ca_label;
    }
    const double inv_n = 1.0 / static_cast<double>(data.size());
    for (int j = 0; j < in_dim; ++j) {
      model.input_mean[j] = sum[j] * inv_n;
      const double var = std::max(0.0, sumsq[j] * inv_n - model.input_mean[j] * model.input_mean[j]);
      model.input_scale[j] = var > kScaleFloor ? std::sqrt(var) : 1.0;
    }
    model.label_offset = label_sum * inv_n;
  }

  // He-style fan-in uniform init, biases zero.
  const std::size_t layers = model.layer_sizes.size() - 1;
  rng::Engine init_rng = rng::make_engine(rng::derive(config.seed, rng::kInitStream));
  model.weights.resize(layers);
  model.biases.resize(layers);
  for (std::size_t l = 0; l < layers; ++l) {
    const int rows = model.layer_sizes[l + 1];
    const int cols = model.layer_sizes[l];
    const double limit = std::sqrt(6.0 / static_cast<double>(cols));
    model.weights[l].resize(static_cast<std::size_t>(rows) * cols);
    for (double& w : model.weights[l]) w = rng::uniform(init_rng, -limit, limit);
    model.biases[l].assign(rows, 0.0);
  }

  std::vector<std::vector<double>> grad_w(layers);
  std::vector<std::vector<double>> grad_b(layers);
  std::vector<std::vector<double>> m_w(layers);
  std::vector<std::vector<double>> m_b(layers);
  std::vector<std::vector<double>> v_w(layers);
  std::vector<std::vector<double>> v_b(layers);
  for (std::size_t l = 0; l < layers; ++l) {
    grad_w[l].assign(model.weights[l].size(), 0.0);
    grad_b[l].assign(model.biases[l].size(), 0.0);
    m_w[l].assign(model.weights[l].size(), 0.0);
    m_b[l].assign(model.biases[l].size(), 0.0);
    v_w[l].assign(model.weights[l].size(), 0.0);
    v_b[l].assign(model.biases[l].size(), 0.0);
  }

  Workspace ws;
  rng::Engine order_rng = rng::make_engine(rng::derive(config.seed, rng::kOrderStream));
  std::vector<std::size_t> order(data.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  long step = 0;
  double beta1_pow = 1.0;
  double beta2_pow = 1.0;
  const double lr = config.learning_rate;
  const double l2 = config.l2_weight;

  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    rng::shuffle(order, order_rng);
    std::size_t pos = 0;
    while (pos < order.size()) {
      const std::size_t batch_end =
          std::min(order.size(), pos + static_cast<std::size_t>(config.batch_size));
      const double inv_batch = 1.0 / static_cast<double>(batch_end - pos);
      for (std::size_t l = 0; l < layers; ++l) {
        std::fill(grad_w[l].begin(), grad_w[l].end(), 0.0);
        std::fill(grad_b[l].begin(), grad_b[l].end(), 0.0);
      }
      for (; pos < batch_end; ++pos) {
        const ChunkSample& s = data[order[pos]];
        const double err = raw_predict(model, s, ws) - s.ca_label;
        // MAE subgradient, 0 at an exact tie.
        const double g = err > 0.0 ? inv_batch : (err < 0.0 ? -inv_batch : 0.0);
        if (g != 0.0) backward(model, ws, g, grad_w, grad_b);
      }

      ++step;
      beta1_pow *= kAdamBeta1;
      beta2_pow *= kAdamBeta2;
      const double m_corr = 1.0 / (1.0 - beta1_pow);
      const double v_corr = 1.0 / (1.0 - beta2_pow);
      for (std::size_t l = 0; l < layers; ++l) {
        double* w = model.weights[l].data();
        double* gw = grad_w[l].data();
        double* mw = m_w[l].data();
        double* vw = v_w[l].data();
        const std::size_t nw = model.weights[l].size();
        for (std::size_t k = 0; k < nw; ++k) {
          const double g = gw[k] + l2 * w[k];
          mw[k] = kAdamBeta1 * mw[k] + (1.0 - kAdamBeta1) * g;
          vw[k] = kAdamBeta2 * vw[k] + (1.0 - kAdamBeta2) * g * g;
          w[k] -= lr * (mw[k] * m_corr) / (std::sqrt(vw[k] * v_corr) + kAdamEps);
        }
        double* b = model.biases[l].data();
        double* gb = grad_b[l].data();
        double* mb = m_b[l].data();
        double* vb = v_b[l].data();
        const std::size_t nb = model.biases[l].size();
        for (std::size_t k = 0; k < nb; ++k) {
          const double g = gb[k];
          mb[k] = kAdamBeta1 * mb[k] + (1.0 - kAdamBeta1) * g;
          vb[k] = kAdamBeta2 * vb[k] + (1.0 - kAdamBeta2) * g * g;
          b[k] -= lr * (mb[k] * m_corr) / (std::sqrt(vb[k] * v_corr) + kAdamEps);
        }
      }
    }

    const double loss = dataset_mae(model, data, ws) + l2_penalty(model);
    if (!std::isfinite(loss)) {
      throw std::runtime_error("regressor: training diverged (non-finite loss at epoch " +
                               std::to_string(epoch + 1) + ")");
    }
    model.loss_trace.push_back(loss);
  }
  return model;
}

RegressorModel train_ridge(const std::vector<ChunkSample>& samples, double l2_weight) {
  if (!(l2_weight >= 0.0)) {
    throw std::invalid_argument("train_ridge: l2_weight must be nonnegative");
  }
  const std::vector<ChunkSample> data = canonicalize(samples);
  validate_samples(data);

  const int p = static_cast<int>(data.front().features.size()) + 1;
  const std::size_t n = data.size();
  const double inv_n = 1.0 / static_cast<double>(n);

  std::vector<double> x;
  std::vector<double> mean(p, 0.0);
  std::vector<double> sumsq(p, 0.0);
  double ymean = 0.0;
  for (const ChunkSample& s : data) {
    fill_input(s, x);
    for (int j = 0; j < p; ++j) {
      mean[j] += x[j];
      sumsq[j] += x[j] * x[j];
    }
    ymean += s.ca_label;
  }
  for (int j = 0; j < p; ++j) mean[j] *= inv_n;
  ymean *= inv_n;

  // Constant columns carry no signal once centered; they get coefficient 0
  // and are absorbed by the intercept, which keeps the l2_weight = 0 solve
  // regular whenever the remaining columns are independent.
  std::vector<int> active;
  for (int j = 0; j < p; ++j) {
    const double var = std::max(0.0, sumsq[j] * inv_n - mean[j] * mean[j]);
    if (var > kScaleFloor) active.push_back(j);
  }

  const int q = static_cast<int>(active.size());
  std::vector<double> normal(static_cast<std::size_t>(q) * q, 0.0);
  std::vector<double> rhs(q, 0.0);
  for (const ChunkSample& s : data) {
    fill_input(s, x);
    const double yc = s.ca_label - ymean;
    for (int a = 0; a < q; ++a) {
      const double xa = x[active[a]] - mean[active[a]];
      for (int b = a; b < q; ++b) {
        normal[static_cast<std::size_t>(a) * q + b] += xa * (x[active[b]] - mean[active[b]]);
      }
      rhs[a] += xa * yc;
    }
  }
  for (int a = 0; a < q; ++a) {
    for (int b = 0; b < a; ++b) {
      normal[static_cast<std::size_t>(a) * q + b] = normal[static_cast<std::size_t>(b) * q + a];
    }
    normal[static_cast<std::size_t>(a) * q + a] += l2_weight;
  }

  // Gaussian elimination with partial pivoting.
  std::vector<double> beta_active(q, 0.0);
  if (q > 0) {
    double amax = 0.0;
    for (double v : normal) amax = std::max(amax, std::abs(v));
    const double pivot_tol = amax > 0.0 ? amax * 1e-12 : 1e-300;
    std::vector<double> a = normal;
    std::vector<double> b = rhs;
    for (int col = 0; col < q; ++col) {
      int pivot = col;
      for (int r = col + 1; r < q; ++r) {
        if (std::abs(a[static_cast<std::size_t>(r) * q + col]) >
            std::abs(a[static_cast<std::size_t>(pivot) * q + col])) {
          pivot = r;
        }
      }
      if (std::abs(a[static_cast<std::size_t>(pivot) * q + col]) <= pivot_tol) {
        throw std::runtime_error(
            "train_ridge: singular normal equations (collinear features with l2_weight = 0)");
      }
      if (pivot != col) {
        for (int c = 0; c < q; ++c) {
          std::swap(a[static_cast<std::size_t>(pivot) * q + c],
                    a[static_cast<std::size_t>(col) * q + c]);
        }
        std::swap(b[pivot], b[col]);
      }
      const double inv_pivot = 1.0 / a[static_cast<std::size_t>(col) * q + col];
      for (int r = col + 1; r < q; ++r) {
        const double factor = a[static_cast<std::size_t>(r) * q + col] * inv_pivot;
        if (factor == 0.0) continue;
        for (int c = col; c < q; ++c) {
          a[static_cast<std::size_t>(r) * q + c] -= factor * a[static_cast<std::size_t>(col) * q + c];
        }
        b[r] -= factor * b[col];
      }
    }
    for (int r = q - 1; r >= 0; --r) {
      double acc = b[r];
      for (int c = r + 1; c < q; ++c) {
        acc -= a[static_cast<std::size_t>(r) * q + c] * beta_active[c];
      }
      beta_active[r] = acc / a[static_cast<std::size_t>(r) * q + r];
    }
  }

  std::vector<double> beta(p, 0.0);
  for (int a = 0; a < q; ++a) beta[active[a]] = beta_active[a];
  double intercept = ymean;
  for (int j = 0; j < p; ++j) intercept -= beta[j] * mean[j];

  RegressorModel model;
  model.config.kind = RegressorKind::ridge;
  model.config.hidden_layer_sizes.clear();
  model.config.l2_weight = l2_weight;
  model.config.seed = 0;
  model.layer_sizes = {p, 1};
  model.weights = {beta};
  model.biases = {{intercept}};
  model.input_mean.assign(p, 0.0);
  model.input_scale.assign(p, 1.0);
  model.label_offset = 0.0;

  Workspace ws;
  model.loss_trace = {dataset_mae(model, data, ws)};
  return model;
}

double predict(const RegressorModel& model, const ChunkSample& sample) {
  if (static_cast<int>(sample.features.size()) + 1 != model.input_dim()) {
    throw std::invalid_argument("predict: feature dimension does not match model input");
  }
  Workspace ws;
  return raw_predict(model, sample, ws);
}

FittedRegressor fit(const std::vector<ChunkSample>& samples, const RegressorConfig& config) {
  RegressorModel model = config.kind == RegressorKind::ridge
                             ? train_ridge(samples, config.l2_weight)
                             : train(samples, config);
  auto shared = std::make_shared<RegressorModel>(std::move(model));
  FittedRegressor fitted;
  fitted.predict = [shared](const ChunkSample& s) { return predict(*shared, s); };
  fitted.model = *shared;
  return fitted;
}

TrainerFn builtin_trainer() {
  return [](const std::vector<ChunkSample>& samples, const RegressorConfig& config) {
    return fit(samples, config);
  };
}

GradientCheckReport gradient_check(const RegressorModel& model,
                                   const std::vector<ChunkSample>& samples, double tolerance) {
  constexpr double kStep = 1e-5;
  constexpr double kErrorMargin = 1e-3;  // exclude samples at the MAE kink
  constexpr double kPreactMargin = 1e-4;  // exclude samples at a ReLU kink

  if (model.parameter_count() >= 10000) {
    throw std::invalid_argument("gradient_check: model too large (>= 10k parameters)");
  }

  GradientCheckReport report;
  report.tolerance = tolerance;
  report.parameters_checked = model.parameter_count();

  // Freeze the retained subset once; perturbations of size kStep cannot move
  // a retained sample across a kink given the margins above.
  std::vector<const ChunkSample*> retained;
  {
    Workspace ws;
    for (const ChunkSample& s : samples) {
      fill_input(s, ws.input);
      standardize(model, ws.input);
      forward(model, ws.input, ws.activations, ws.preacts);
      const double pred = ws.activations.back()[0] + model.label_offset;
      bool kink = std::abs(pred - s.ca_label) < kErrorMargin;
      // hidden layers only; the last layer has no ReLU
      for (std::size_t l = 0; !kink && l + 1 < model.weights.size(); ++l) {
        for (double z : ws.preacts[l]) {
          if (std::abs(z) < kPreactMargin) {
            kink = true;
            break;
          }
        }
      }
      if (kink) {
        ++report.samples_excluded;
      } else {
        retained.push_back(&s);
      }
    }
  }
  report.samples_used = retained.size();
  if (retained.empty()) {
    report.pass = true;
    return report;
  }

  RegressorModel probe = model;  // mutable copy for probing

  Workspace ws;
  const double inv_n = 1.0 / static_cast<double>(retained.size());
  auto loss = [&]() {
    double sum = 0.0;
    for (const ChunkSample* s : retained) {
      sum += std::abs(raw_predict(probe, *s, ws) - s->ca_label);
    }
    return sum * inv_n + l2_penalty(probe);
  };

  // Analytic gradient over the retained subset.
  const std::size_t layers = model.weights.size();
  std::vector<std::vector<double>> grad_w(layers);
  std::vector<std::vector<double>> grad_b(layers);
  for (std::size_t l = 0; l < layers; ++l) {
    grad_w[l].assign(model.weights[l].size(), 0.0);
    grad_b[l].assign(model.biases[l].size(), 0.0);
  }
  for (const ChunkSample* s : retained) {
    const double err = raw_predict(probe, *s, ws) - s->ca_label;
    const double g = err > 0.0 ? inv_n : (err < 0.0 ? -inv_n : 0.0);
    if (g != 0.0) backward(probe, ws, g, grad_w, grad_b);
  }
  if (probe.config.l2_weight != 0.0) {
    for (std::size_t l = 0; l < layers; ++l) {
      for (std::size_t k = 0; k < grad_w[l].size(); ++k) {
        grad_w[l][k] += probe.config.l2_weight * probe.weights[l][k];
      }
    }
  }

  auto check_param = [&](double& theta, double analytic) {
    const double saved = theta;
    theta = saved + kStep;
    const double up = loss();
    theta = saved - kStep;
    const double down = loss();
    theta = saved;
    const double numeric = (up - down) / (2.0 * kStep);
    const double denom = std::max({1.0, std::abs(analytic), std::abs(numeric)});
    const double rel = std::abs(analytic - numeric) / denom;
    report.max_relative_discrepancy = std::max(report.max_relative_discrepancy, rel);
  };

  for (std::size_t l = 0; l < layers; ++l) {
    for (std::size_t k = 0; k < probe.weights[l].size(); ++k) {
      check_param(probe.weights[l][k], grad_w[l][k]);
    }
    for (std::size_t k = 0; k < probe.biases[l].size(); ++k) {
      check_param(probe.biases[l][k], grad_b[l][k]);
    }
  }
  report.pass = report.max_relative_discrepancy < tolerance;
  return report;
}

namespace {

void write_vector(std::ostringstream& out, const std::string& key,
                  const std::vector<double>& values) {
  out << key << ' ' << values.size();
  for (double v : values) out << ' ' << format_double(v);
  out << '\n';
}

std::vector<std::string> tokenize(const std::string& line) {
  std::vector<std::string> tokens;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && line[i] == ' ') ++i;
    std::size_t start = i;
    while (i < line.size() && line[i] != ' ') ++i;
    if (i > start) tokens.push_back(line.substr(start, i - start));
  }
  return tokens;
}

}  // namespace

std::string serialize_model(const RegressorModel& model) {
  std::ostringstream out;
  out << "bioage-model 1\n";
  out << "kind " << (model.config.kind == RegressorKind::ridge ? "ridge" : "mlp") << '\n';
  out << "layer_sizes " << model.layer_sizes.size();
  for (int d : model.layer_sizes) out << ' ' << d;
  out << '\n';
  write_vector(out, "input_mean", model.input_mean);
  write_vector(out, "input_scale", model.input_scale);
  out << "label_offset " << format_double(model.label_offset) << '\n';
  for (std::size_t l = 0; l < model.weights.size(); ++l) {
    write_vector(out, "weights " + std::to_string(l), model.weights[l]);
    write_vector(out, "biases " + std::to_string(l), model.biases[l]);
  }
  write_vector(out, "loss_trace", model.loss_trace);
  out << "config_hidden " << model.config.hidden_layer_sizes.size();
  for (int h : model.config.hidden_layer_sizes) out << ' ' << h;
  out << '\n';
  out << "config_learning_rate " << format_double(model.config.learning_rate) << '\n';
  out << "config_epochs " << model.config.epochs << '\n';
  out << "config_batch_size " << model.config.batch_size << '\n';
  out << "config_l2_weight " << format_double(model.config.l2_weight) << '\n';
  out << "config_seed " << model.config.seed << '\n';
  out << "end\n";
  return out.str();
}

RegressorModel parse_model(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || line != "bioage-model 1") {
    throw DataError("model file: unknown header");
  }
  RegressorModel model;
  bool saw_end = false;
  auto read_values = [](const std::vector<std::string>& tokens, std::size_t offset,
                        std::vector<double>& out) {
    const std::size_t count = static_cast<std::size_t>(parse_uint(tokens.at(offset)));
    if (tokens.size() != offset + 1 + count) throw DataError("model file: bad vector length");
    out.resize(count);
    for (std::size_t i = 0; i < count; ++i) out[i] = parse_double(tokens[offset + 1 + i]);
  };
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const std::vector<std::string> tokens = tokenize(line);
    const std::string& key = tokens.front();
    if (key == "end") {
      saw_end = true;
      break;
    } else if (key == "kind") {
      model.config.kind = tokens.at(1) == "ridge" ? RegressorKind::ridge : RegressorKind::mlp;
    } else if (key == "layer_sizes") {
      const std::size_t count = static_cast<std::size_t>(parse_uint(tokens.at(1)));
      if (tokens.size() != 2 + count) throw DataError("model file: bad layer_sizes");
      model.layer_sizes.clear();
      for (std::size_t i = 0; i < count; ++i) {
        model.layer_sizes.push_back(static_cast<int>(parse_int(tokens[2 + i])));
      }
    } else if (key == "input_mean") {
      read_values(tokens, 1, model.input_mean);
    } else if (key == "input_scale") {
      read_values(tokens, 1, model.input_scale);
    } else if (key == "label_offset") {
      model.label_offset = parse_double(tokens.at(1));
    } else if (key == "weights") {
      const std::size_t l = static_cast<std::size_t>(parse_uint(tokens.at(1)));
      if (model.weights.size() <= l) model.weights.resize(l + 1);
      read_values(tokens, 2, model.weights[l]);
    } else if (key == "biases") {
      const std::size_t l = static_cast<std::size_t>(parse_uint(tokens.at(1)));
      if (model.biases.size() <= l) model.biases.resize(l + 1);
      read_values(tokens, 2, model.biases[l]);
    } else if (key == "loss_trace") {
      read_values(tokens, 1, model.loss_trace);
    } else if (key == "config_hidden") {
      const std::size_t count = static_cast<std::size_t>(parse_uint(tokens.at(1)));
      if (tokens.size() != 2 + count) throw DataError("model file: bad config_hidden");
      model.config.hidden_layer_sizes.clear();
      for (std::size_t i = 0; i < count; ++i) {
        model.config.hidden_layer_sizes.push_back(static_cast<int>(parse_int(tokens[2 + i])));
      }
    } else if (key == "config_learning_rate") {
      model.config.learning_rate = parse_double(tokens.at(1));
    } else if (key == "config_epochs") {
      model.config.epochs = static_cast<int>(parse_int(tokens.at(1)));
    } else if (key == "config_batch_size") {
      model.config.batch_size = static_cast<int>(parse_int(tokens.at(1)));
    } else if (key == "config_l2_weight") {
      model.config.l2_weight = parse_double(tokens.at(1));
    } else if (key == "config_seed") {
      model.config.seed = parse_uint(tokens.at(1));
    } else {
      throw DataError("model file: unknown key '" + key + "'");
    }
  }
  if (!saw_end) throw DataError("model file: truncated (missing end marker)");
  if (model.layer_sizes.size() < 2) throw DataError("model file: missing layer_sizes");
  const std::size_t layers = model.layer_sizes.size() - 1;
  if (model.weights.size() != layers || model.biases.size() != layers) {
    throw DataError("model file: layer count mismatch");
  }
  for (std::size_t l = 0; l < layers; ++l) {
    const std::size_t expect_w =
        static_cast<std::size_t>(model.layer_sizes[l]) * model.layer_sizes[l + 1];
    if (model.weights[l].size() != expect_w ||
        model.biases[l].size() != static_cast<std::size_t>(model.layer_sizes[l + 1])) {
      throw DataError("model file: tensor shape mismatch at layer " + std::to_string(l));
    }
  }
  if (model.input_mean.size() != static_cast<std::size_t>(model.layer_sizes.front()) ||
      model.input_scale.size() != model.input_mean.size()) {
    throw DataError("model file: standardization size mismatch");
  }
  return model;
}

void save_model(const std::string& path, const RegressorModel& model) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open for writing: " + path);
  out << serialize_model(model);
  if (!out) throw std::runtime_error("write failed: " + path);
}

RegressorModel load_model(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open: " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_model(buf.str());
}

}  // namespace bioage
