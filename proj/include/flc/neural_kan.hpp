#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

namespace flc::kan {

/// Edge-wise Chebyshev layer. Each edge (input i -> output o) carries the
/// coefficients of sum_n c[i][o][n] T_n(tanh(x_i)).
///
/// Coefficients are stored flat in (input, output, degree) order.
class ChebyKanLayer {
 public:
  ChebyKanLayer(std::size_t in_dim, std::size_t out_dim, std::size_t degree);

  std::size_t in_dim() const { return in_dim_; }
  std::size_t out_dim() const { return out_dim_; }
  std::size_t degree() const { return degree_; }
  std::size_t size() const { return coeffs_.size(); }

  std::size_t index(std::size_t i, std::size_t o, std::size_t n) const {
    return (i * out_dim_ + o) * (degree_ + 1) + n;
  }
  double& coeff(std::size_t i, std::size_t o, std::size_t n) { return coeffs_[index(i, o, n)]; }
  double coeff(std::size_t i, std::size_t o, std::size_t n) const { return coeffs_[index(i, o, n)]; }

  std::span<double> coefficients() { return coeffs_; }
  std::span<const double> coefficients() const { return coeffs_; }

  bool operator==(const ChebyKanLayer&) const = default;

 private:
  std::size_t in_dim_;
  std::size_t out_dim_;
  std::size_t degree_;
  std::vector<double> coeffs_;
};

/// Layer widths (dims.size() == layers + 1) and per-layer degrees.
struct Architecture {
  std::vector<std::size_t> dims;
  std::vector<std::size_t> degrees;

  bool operator==(const Architecture&) const = default;
};

/// Uniform-degree architecture, e.g. ({3, 32, 1}, 5).
Architecture uniform_architecture(std::vector<std::size_t> dims, std::size_t degree);

class ChebyKanModel {
 public:
  ChebyKanModel() = default;
  explicit ChebyKanModel(std::vector<ChebyKanLayer> layers);

  static ChebyKanModel zeros(const Architecture& arch);
  /// Zero-mean uniform init with half-width 1 / (in_dim * (degree + 1)).
  static ChebyKanModel random(const Architecture& arch, std::uint64_t seed);

  const std::vector<ChebyKanLayer>& layers() const { return layers_; }
  std::vector<ChebyKanLayer>& layers() { return layers_; }

  std::size_t input_dim() const;
  std::size_t output_dim() const;
  Architecture architecture() const;

  bool operator==(const ChebyKanModel&) const = default;

 private:
  std::vector<ChebyKanLayer> layers_;
};

/// [T_0(x), ..., T_d(x)] by the three-term recurrence.
std::vector<double> chebyshev_basis(double x, std::size_t degree);
void chebyshev_basis(double x, std::span<double> out);

std::vector<double> layer_forward(const ChebyKanLayer& layer, std::span<const double> input);
std::vector<double> model_forward(const ChebyKanModel& model, std::span<const double> input);

struct TrainingSample {
  std::vector<double> input;
  std::vector<double> target;
};

/// Mean over the batch of the squared error norm.
double loss_mse(const ChebyKanModel& model, std::span<const TrainingSample> batch);

/// Per-layer gradient tensors, laid out like the layer coefficients.
using Gradient = std::vector<std::vector<double>>;

struct LossGradient {
  double loss = 0.0;
  Gradient gradient;
};

/// Exact gradient of loss_mse with respect to every coefficient.
Gradient backward(const ChebyKanModel& model, std::span<const TrainingSample> batch);
LossGradient loss_and_gradient(const ChebyKanModel& model, std::span<const TrainingSample> batch);

enum class Optimizer { Sgd, Adam };

Optimizer parse_optimizer(const std::string& name);
std::string to_string(Optimizer opt);

struct TrainHyper {
  double lr = 1e-3;
  std::size_t batch_size = 1024;
  std::size_t epochs = 1;
  std::uint64_t seed = 0;
  Optimizer optimizer = Optimizer::Adam;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
};

struct TrainResult {
  ChebyKanModel model;
  /// Sample-weighted mean of the batch losses seen during the last epoch.
  double final_loss = 0.0;
};

/// Mini-batch first-order training on a copy of `model`. Shuffling uses only
/// `hyper.seed`. Throws EmptyBatch or DivergedLoss.
TrainResult train_local(const ChebyKanModel& model, std::span<const TrainingSample> shard,
                        const TrainHyper& hyper);

std::size_t param_count(const ChebyKanModel& model);
std::size_t param_count(const Architecture& arch);

/// Operation count for one forward pass. Multiplies and adds count 1 each;
/// every T_2..T_d costs 3 per input feature; each coefficient costs a
/// multiply and an add. tanh is not counted.
std::size_t flop_count(const Architecture& arch);
std::size_t flop_count(const ChebyKanModel& model);

struct EdgeFunction {
  std::size_t layer = 0;
  std::size_t input = 0;
  std::size_t output = 0;
  std::vector<double> coefficients;
  std::vector<double> z;
  std::vector<double> value;
};

inline constexpr std::size_t kEdgeTabulationPoints = 129;

/// Every learned univariate edge function, tabulated on z in [-1, 1].
std::vector<EdgeFunction> export_edges(const ChebyKanModel& model);
nlohmann::json edges_to_json(const std::vector<EdgeFunction>& edges);

struct TrainingMetadata {
  std::uint64_t seed = 0;
  std::size_t rounds = 0;
  double final_loss = 0.0;
  /// Seconds per unit of the time feature the model was trained with.
  double time_scale = 1.0;
  std::string config_hash;
};

inline constexpr int kCheckpointSchemaVersion = 1;

nlohmann::json to_checkpoint(const ChebyKanModel& model, const TrainingMetadata& meta);

struct Checkpoint {
  ChebyKanModel model;
  TrainingMetadata meta;
};

/// Throws ConfigError on a malformed or wrong-version document.
Checkpoint from_checkpoint(const nlohmann::json& doc);

void save_checkpoint(const std::string& path, const ChebyKanModel& model,
                     const TrainingMetadata& meta);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace flc::kan
