#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "emerg/data.hpp"
#include "emerg/model.hpp"
#include "emerg/params.hpp"

namespace emerg::meta {

using ad::Var;

struct Ablations {
  bool random_graph = false;  // seeded random Ā^(1) instead of the hypernetwork
  bool no_sparsify = false;
  bool no_mask = false;
  bool shared_graph = false;  // one learned Ā^(1) for every item
  bool no_meta = false;       // pooled BCE on old items, no tasks
  bool no_inner = false;      // φ' = φ inside the meta objective
};

// Defaults are the published MovieLens settings.
struct MetaConfig {
  model::ModelConfig model;
  double gamma = 0.1;
  double inner_lr = 0.01;   // α1 during meta-training
  double meta_lr = 0.001;   // α2
  double pretrain_lr = 0.005;
  std::size_t pretrain_epochs = 2;
  std::size_t meta_epochs = 11;
  std::size_t inner_steps = 1;
  double warmup_lr = 0.01;  // α1 during warm-up
  std::size_t warmup_epochs = 11;
  std::size_t batch_size = 512;
  std::size_t shots = 20;       // K
  std::size_t threshold = 200;  // N
  std::size_t support_size = 0;  // 0: K
  std::size_t query_size = 0;    // 0: K
  Ablations ablations;
  std::uint64_t seed = 42;
  bool first_order = true;

  void validate() const;
  std::size_t n_support() const { return support_size ? support_size : shots; }
  std::size_t n_query() const { return query_size ? query_size : shots; }
  // The model config with the sparsify/mask ablations applied.
  model::ModelConfig effective_model() const;
};

inline constexpr const char* kSharedGraph = "shared_graph/adjacency";

// θ_hyper: the hypernetwork, or the shared adjacency under shared_graph.
bool is_hyper(const std::string& name);
std::vector<std::string> hyper_names(const ad::ParamStore& theta);
std::vector<std::string> gnn_names(const ad::ParamStore& theta);

ad::ParamStore init_theta(const model::Model& model, const MetaConfig& cfg, ad::Rng& rng);

// Only the parameters accepted by `traced` become differentiable leaves.
ad::Binding bind_traced(const ad::ParamStore& theta, const std::function<bool(const std::string&)>& traced);
ad::Binding bind_all(const ad::ParamStore& theta);
ad::Binding bind_frozen(const ad::ParamStore& theta);

struct ItemPhi {
  Var bar1;  // [N', N']
  Var eid;   // [N_d]
};

// Rng for a brand-new item: depends on the run seed and the item only.
ad::Rng item_rng(std::uint64_t seed, std::uint64_t item);
Tensor random_adjacency(std::size_t nodes, std::uint64_t seed, std::uint64_t item);

// e_ID is drawn from `rng`. The graph follows the ablation: hypernetwork on
// the item's feature rows (with e_ID as the ID row), a seeded random matrix,
// or the shared learned matrix.
ItemPhi init_phi(const model::Model& model, const ad::Binding& theta, const MetaConfig& cfg,
                 const data::RawInteraction& item_record, ad::Rng& rng);
// The deterministic cold-start φ of a new item.
ItemPhi cold_phi(const model::Model& model, const ad::Binding& theta, const MetaConfig& cfg,
                 const data::RawInteraction& item_record);

// Mean BCE of the model on `records` under φ.
Var phi_loss(const model::Model& model, const ad::Binding& theta, const data::InteractionTable& table,
             std::span<const std::size_t> records, const ItemPhi& phi);
Var phi_predict(const model::Model& model, const ad::Binding& theta, const data::InteractionTable& table,
                std::span<const std::size_t> records, const ItemPhi& phi);

struct InnerOptions {
  double lr = 0.01;
  std::size_t steps = 1;
  bool adapt_graph = true;  // false: only e_ID moves
  // true: the steps are traced, so the result can be differentiated through
  // the update itself. false: φ' = φ - const, keeping only φ's own trace.
  bool differentiable = false;
};

// Plain gradient descent on the support loss w.r.t. φ; θ is never touched.
ItemPhi inner_update(const model::Model& model, const ad::Binding& theta, const data::InteractionTable& table,
                     std::span<const std::size_t> support, const ItemPhi& phi, const InnerOptions& opts);

// γ·L_S + (1-γ)·L_Q
double mix_loss(double gamma, double support_loss, double query_loss);
Var meta_loss(const model::Model& model, const ad::Binding& theta, const data::InteractionTable& table,
              const data::Task& task, const ItemPhi& phi, const ItemPhi& phi_after, double gamma);

struct LogRow {
  std::string stage;  // pretrain, meta, pooled
  std::size_t epoch = 0;
  std::size_t step = 0;
  std::optional<std::uint64_t> item;
  double support_loss = 0.0;  // batch loss for pooled stages
  std::optional<double> query_loss;
  double loss = 0.0;
};
void write_log_csv(std::ostream& os, const std::vector<LogRow>& rows);

// Minibatch BCE over pooled old-item records with frozen per-item graphs;
// only θ_GNN moves.
std::vector<LogRow> pretrain(ad::ParamStore& theta, const model::Model& model, const data::InteractionTable& table,
                             const std::set<std::uint64_t>& old_items, const MetaConfig& cfg, ad::Rng& rng);

// One task per old item per epoch, items in shuffled order; each task takes
// one Adam step on θ. Under no_meta: pooled minibatch BCE on θ instead.
std::vector<LogRow> meta_train(ad::ParamStore& theta, const model::Model& model, const data::InteractionTable& table,
                               const std::set<std::uint64_t>& old_items, const MetaConfig& cfg, ad::Rng& rng);

struct PhaseResult {
  std::string phase;  // cold, A, B, C, common-<n>
  std::vector<double> predictions;
  std::vector<int> labels;
  double bce = 0.0;
  std::optional<double> auc;  // unset when the test labels are one class
  double f1 = 0.0;
};

struct ItemEvaluation {
  std::uint64_t item = 0;
  std::vector<PhaseResult> phases;
  std::vector<ItemPhi> states;  // φ after each phase (constants)
};

// Cold start, then warm-up on A, A∪B, A∪B∪C, never re-initializing φ.
ItemEvaluation evaluate_phases(const ad::ParamStore& theta, const model::Model& model,
                               const data::InteractionTable& table, std::uint64_t item,
                               const data::ItemPhases& phases, const MetaConfig& cfg);

struct PooledPhase {
  std::string phase;
  std::vector<double> predictions;
  std::vector<int> labels;
};

// All new items of the plan; per-item runs are independent and may use
// `workers` threads. Results are in item order regardless of workers.
std::vector<ItemEvaluation> evaluate_items(const ad::ParamStore& theta, const model::Model& model,
                                           const data::InteractionTable& table, const data::PhasePlan& plan,
                                           const MetaConfig& cfg, std::size_t workers = 1);
std::vector<PooledPhase> pool_phases(const std::vector<ItemEvaluation>& items);

struct CommonOptions {
  std::size_t extra = 0;            // records moved from the front of the test pool
  std::vector<std::size_t> sizes;   // increasing counts of extra records in the support
  bool unfreeze_theta = false;      // also descend on θ (a private copy)
};

// Phase C state on the reduced test set, then one entry per size.
std::vector<PhaseResult> common_train(const ad::ParamStore& theta, const model::Model& model,
                                      const data::InteractionTable& table, std::uint64_t item,
                                      const data::ItemPhases& phases, const MetaConfig& cfg,
                                      const CommonOptions& opts);

}  // namespace emerg::meta
