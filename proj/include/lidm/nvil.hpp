#pragma once

#include "lidm/corpus.hpp"
#include "lidm/model.hpp"
#include "lidm/pipeline.hpp"

#include <nlohmann/json_fwd.hpp>

#include <filesystem>
#include <functional>
#include <set>
#include <span>
#include <string>
#include <vector>

namespace lidm {

// KL(q || pi), summed over all intentions; terms with q(z) = 0 contribute nothing.
double kl_divergence(const Vector& q, const Vector& pi);

// Estimate of E_q[log p(m|z,s)] - lambda KL(q||pi) from the log-likelihoods of samples drawn from q.
double bound_from_samples(std::span<const double> sample_log_p, const Vector& q, const Vector& pi, double lambda);
// The same bound with the expectation taken exactly: sum_z q(z) log p(m|z,s) - lambda KL(q||pi).
double bound_from_terms(const Vector& log_p, const Vector& q, const Vector& pi, double lambda);

// r = log p(m|z,s) - lambda (log q(z|s,m) - log pi(z|s))
double learning_signal(double log_p, double log_q, double log_pi, double lambda);

Vector response_log_probs(const LidmModel& model, const TurnContext& turn, const Vector& state);

// Monte-Carlo bound with the given intentions standing in for samples from q.
double variational_bound(const LidmModel& model, const TurnContext& turn, double lambda, std::span<const int> samples);
// Exact bound by enumeration; q defaults to the inference network.
double exact_bound(const LidmModel& model, const TurnContext& turn, double lambda, const Vector* q = nullptr);
// Exact posterior p(z|m,s) proportional to p(m|z,s) pi(z|s).
Vector exact_posterior(const LidmModel& model, const TurnContext& turn);

// Gradient accumulation into Param::grad for each update path; nothing is applied.
// Gradients are those of -weight * quantity so that a descent step ascends the quantity:
//   decoder:    log p(m|z,s) w.r.t. Theta1, s held constant
//   generative: lambda * sum_z q(z) log pi(z|s) w.r.t. Theta2, q constant (descends KL(q||pi))
//   inference:  signal * log q(z|s,m) w.r.t. Phi
// The baseline accumulator differentiates (r - b - b(s))^2 itself, with s constant.
// Each returns the undifferentiated quantity (before weighting).
double accumulate_decoder(LidmModel& model, const TurnContext& turn, int z, double weight);
double accumulate_generative(LidmModel& model, const TurnContext& turn, const Vector& q, double lambda, double weight);
double accumulate_labeled_policy(LidmModel& model, const TurnContext& turn, int z, double weight);
double accumulate_inference(LidmModel& model, const TurnContext& turn, int z, double signal, double weight);
double accumulate_baseline(LidmModel& model, const Vector& state, double reward);

// Squared distance (r - b - b(s))^2.
double baseline_loss(const LidmModel& model, const Vector& state, double reward);

// Applies an Adam step to one parameter group; returns false (and discards the gradient)
// when the gradient is not finite.
bool apply_step(LidmModel& model, const ParamFilter& group, Adam& adam, double clip = 0.0);

struct StepOptimisers {
  Adam generative{1e-3};
  Adam inference{1e-3};
  Adam baseline{1e-2};
};

// Single-path steps, each touching exactly its parameter group.
bool decoder_gradient_step(LidmModel& model, const TurnContext& turn, int z, Adam& adam);
bool generative_kl_step(LidmModel& model, const TurnContext& turn, const Vector& q, double lambda, Adam& adam);
bool inference_gradient_step(LidmModel& model, const TurnContext& turn, int z, double signal, Adam& adam);
bool baseline_step(LidmModel& model, const Vector& state, double reward, Adam& adam);

// Clustering labeler.
std::span<const std::string_view> english_stopwords();
std::set<std::string> content_words(const Tokens& delex_response);

struct ResponseCluster {
  std::set<std::string> content;
  std::size_t size = 0;
};

struct LabeledSet {
  std::vector<ResponseCluster> clusters;  // ranked by size, largest first
  // labels[d][t]: intention for turn t of dialogue d, -1 when unlabeled.
  std::vector<std::vector<int>> labels;
  std::size_t labeled = 0;
  std::size_t total = 0;

  double labeled_fraction() const { return total ? static_cast<double>(labeled) / static_cast<double>(total) : 0.0; }
};

// Responses with identical content-word sets form a cluster; the i-th largest cluster labels
// its members with intention i for i < latent_size. Responses without content words stay unlabeled.
LabeledSet cluster_responses(const std::vector<DialogueRecord>& records, int latent_size);
void apply_labels(std::vector<DialogueContext>& dialogues, const LabeledSet& labels);

struct NvilConfig {
  double lambda = 0.1;
  double alpha = 0.1;
  int samples = 1;
  double learning_rate = 1e-3;
  double baseline_learning_rate = 1e-2;
  int max_epochs = 30;
  int patience = 3;
  double clip = 5.0;
  std::uint64_t seed = 1;

  nlohmann::json to_json() const;
  static NvilConfig from_json(const nlohmann::json& j);
};

// L' = alpha * sum over unlabeled turns of the exact bound + sum over labeled turns of
// log p(m|z^,s) + log pi(z^|s) + log q(z^|s,m).
struct JointObjective {
  double l1 = 0.0;
  double l2 = 0.0;
  double total = 0.0;
};
JointObjective joint_objective(const LidmModel& model, const std::vector<DialogueContext>& dialogues,
                               const NvilConfig& config);

struct EpochStats {
  int epoch = 0;
  double l1 = 0.0;  // sum over unlabeled training turns of the sampled bound
  double l2 = 0.0;  // sum over labeled training turns of the joint log-likelihood
  double objective = 0.0;
  double valid_bound = 0.0;  // mean exact bound per validation turn
  double kl = 0.0;           // mean KL(q||pi) per training turn
  std::size_t skipped_steps = 0;
};

struct TurnStats {
  double bound = 0.0;
  double joint = 0.0;
  double kl = 0.0;
  bool labeled = false;
  std::size_t skipped = 0;
};

class NvilTrainer {
 public:
  NvilTrainer(LidmModel& model, NvilConfig config);

  // One turn: generative update (Theta1, Theta2), then inference update (Phi), then baselines.
  TurnStats train_turn(const TurnContext& turn);
  EpochStats train_epoch(const std::vector<DialogueContext>& train, const std::vector<DialogueContext>& valid,
                         int epoch);
  // Trains until the validation bound fails to improve for `patience` epochs; keeps the best parameters.
  std::vector<EpochStats> fit(const std::vector<DialogueContext>& train, const std::vector<DialogueContext>& valid,
                              const std::function<void(const EpochStats&)>& on_epoch = {});

 private:
  LidmModel* model_;
  NvilConfig config_;
  Rng rng_;
  StepOptimisers opt_;
};

double mean_exact_bound(const LidmModel& model, const std::vector<DialogueContext>& dialogues, double lambda);

void write_epoch_csv_header(std::ostream& out);
void write_epoch_csv_row(std::ostream& out, const EpochStats& s);

}  // namespace lidm
