#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "bioage/core.hpp"

namespace bioage {

enum class RegressorKind { mlp, ridge };

// Training configuration. The loss is fixed to mean absolute error; the
// seed fully determines initialization and batch order.
struct RegressorConfig {
  RegressorKind kind = RegressorKind::mlp;
  std::vector<int> hidden_layer_sizes{64, 32};
  double learning_rate = 1e-3;
  int epochs = 200;
  int batch_size = 64;
  double l2_weight = 1e-4;
  std::uint64_t seed = 1;
};

// A trained predictor: a feedforward net whose inputs are the chunk features
// with the gender label appended. Inputs are z-scored and labels centered
// with statistics frozen at training time, so the net itself only has to
// learn offsets around the cohort mean age. hidden_layer_sizes empty gives a
// plain affine model, which is how the ridge oracle is represented.
struct RegressorModel {
  std::vector<int> layer_sizes;  // input, hidden..., 1
  std::vector<std::vector<double>> weights;  // per layer, row-major, rows = outputs
  std::vector<std::vector<double>> biases;
  std::vector<double> input_mean;
  std::vector<double> input_scale;
  double label_offset = 0.0;
  RegressorConfig config;
  std::vector<double> loss_trace;  // objective after each epoch

  std::size_t parameter_count() const;
  int input_dim() const { return layer_sizes.empty() ? 0 : layer_sizes.front(); }
};

// Trains the feedforward network with Adam (beta1 0.9, beta2 0.999, eps
// 1e-8) on the MAE objective plus 0.5 * l2_weight * ||W||^2 over weights.
// Deterministic: samples are canonicalized by (patient_id, scan_id,
// chunk_index) first, so the result is a pure function of the sample set
// and the config. A non-finite epoch loss is reported as an error.
RegressorModel train(const std::vector<ChunkSample>& samples, const RegressorConfig& config);

// Closed-form ridge solve of the regularized normal equations with an
// unpenalized intercept (columns centered, intercept recovered from the
// means). Zero-variance columns get a zero coefficient. Deterministic and
// seed-free; throws on a singular system, which can only happen with
// l2_weight = 0.
RegressorModel train_ridge(const std::vector<ChunkSample>& samples, double l2_weight);

double predict(const RegressorModel& model, const ChunkSample& sample);

// Trainer indirection: the cleaning engine sees only a fitted predictor, so
// tests can inject oracles and the CLI can select the network or the ridge
// solver per config.
struct FittedRegressor {
  std::function<double(const ChunkSample&)> predict;
  std::optional<RegressorModel> model;
};

using TrainerFn =
    std::function<FittedRegressor(const std::vector<ChunkSample>&, const RegressorConfig&)>;

// Dispatches on config.kind.
FittedRegressor fit(const std::vector<ChunkSample>& samples, const RegressorConfig& config);
TrainerFn builtin_trainer();

struct GradientCheckReport {
  double max_relative_discrepancy = 0.0;
  double tolerance = 0.0;
  std::size_t parameters_checked = 0;
  std::size_t samples_used = 0;
  std::size_t samples_excluded = 0;
  bool pass = false;
};

// Compares backpropagated gradients of the training objective against
// central finite differences (step 1e-5) over every parameter. Samples
// sitting at a non-differentiable point (|prediction - label| below margin,
// or a ReLU pre-activation at zero) are excluded so the finite-difference
// window never straddles a kink; the same retained subset feeds both sides.
// Failures are data in the report, not errors.
GradientCheckReport gradient_check(const RegressorModel& model,
                                   const std::vector<ChunkSample>& samples, double tolerance);

// Self-describing text persistence; save -> load -> predict is bit-exact.
std::string serialize_model(const RegressorModel& model);
RegressorModel parse_model(const std::string& text);
void save_model(const std::string& path, const RegressorModel& model);
RegressorModel load_model(const std::string& path);

}  // namespace bioage
