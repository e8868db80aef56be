#include "emerg/meta.hpp"

#include <algorithm>
#include <atomic>
#include <exception>
#include <map>
#include <mutex>
#include <ostream>
#include <thread>

#include "emerg/embed.hpp"
#include "emerg/errors.hpp"
#include "emerg/metrics.hpp"
#include "emerg/nn.hpp"

namespace emerg::meta {

namespace {

std::vector<double> labels_of(const data::InteractionTable& table, std::span<const std::size_t> records) {
  std::vector<double> y;
  y.reserve(records.size());
  for (auto r : records) y.push_back(table.row(r).label);
  return y;
}

// a - b, elementwise
Tensor minus(const Tensor& a, const Tensor& b) {
  Tensor out = a;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= b[i];
  return out;
}

void axpy(Tensor& y, double a, const Tensor& x) {
  for (std::size_t i = 0; i < y.size(); ++i) y[i] += a * x[i];
}

ItemPhi as_constants(const ItemPhi& phi) { return {Var::constant(phi.bar1.value()), Var::constant(phi.eid.value())}; }

struct Terms {
  Var support, query, total;
};

Terms meta_terms(const model::Model& model, const ad::Binding& theta, const data::InteractionTable& table,
                 const data::Task& task, const ItemPhi& phi, const ItemPhi& phi_after, double gamma) {
  Terms t;
  t.support = phi_loss(model, theta, table, task.support, phi);
  t.query = phi_loss(model, theta, table, task.query, phi_after);
  t.total = ad::add(ad::scale(t.support, gamma), ad::scale(t.query, 1.0 - gamma));
  return t;
}

// Ā^(1) used by the pooled trainers, where items keep their table ID rows.
Var pooled_graph(const model::Model& model, const ad::Binding& theta, const MetaConfig& cfg,
                 const data::RawInteraction& rec, bool detach) {
  Var g;
  if (cfg.ablations.random_graph)
    return Var::constant(random_adjacency(model.nodes(), cfg.seed, rec.item));
  if (cfg.ablations.shared_graph)
    g = theta(kSharedGraph);
  else
    g = model.generate_adjacency(theta, rec);
  return detach ? g.detach() : g;
}

// Minibatch BCE over all records of `items`; each batch is split by item so
// every item runs under its own graph.
std::vector<LogRow> pooled_train(ad::ParamStore& theta, const model::Model& model, const data::InteractionTable& table,
                                 const std::set<std::uint64_t>& items, const MetaConfig& cfg, ad::Rng& rng,
                                 const std::function<bool(const std::string&)>& traced, double lr,
                                 std::size_t epochs, bool detach_graph, const std::string& stage) {
  std::vector<std::size_t> records;
  for (auto item : items) {
    const auto& r = table.records_of(item);
    records.insert(records.end(), r.begin(), r.end());
  }
  std::vector<std::string> names;
  for (const auto& n : theta.trainable_names())
    if (traced(n)) names.push_back(n);
  ad::Adam adam({lr});
  std::vector<LogRow> log;
  std::size_t step = 0;
  for (std::size_t epoch = 0; epoch < epochs; ++epoch) {
    std::shuffle(records.begin(), records.end(), rng);
    for (std::size_t start = 0; start < records.size(); start += cfg.batch_size) {
      const std::size_t end = std::min(records.size(), start + cfg.batch_size);
      std::map<std::uint64_t, std::vector<std::size_t>> groups;
      for (std::size_t i = start; i < end; ++i) groups[table.row(records[i]).item].push_back(records[i]);
      const double inv_b = 1.0 / static_cast<double>(end - start);

      const ad::Binding b = bind_traced(theta, traced);
      Var total;
      for (const auto& [item, recs] : groups) {
        const Var bar = pooled_graph(model, b, cfg, table.row(recs.front()), detach_graph);
        const Var probs = model.forward(b, table, recs, bar);
        const Var part = ad::scale(ad::bce_mean(probs, labels_of(table, recs)), inv_b * static_cast<double>(recs.size()));
        total = total.defined() ? ad::add(total, part) : part;
      }
      const auto grads = ad::backward(total, b);
      adam.step(theta, grads, names);
      LogRow row;
      row.stage = stage;
      row.epoch = epoch;
      row.step = step++;
      row.support_loss = row.loss = total.item();
      log.push_back(std::move(row));
    }
  }
  return log;
}

PhaseResult score(const model::Model& model, const ad::Binding& theta, const data::InteractionTable& table,
                  std::span<const std::size_t> test, const ItemPhi& phi, std::string label) {
  ad::NoGradGuard guard;
  PhaseResult r;
  r.phase = std::move(label);
  const Tensor probs = phi_predict(model, theta, table, test, phi).value();
  r.predictions.assign(probs.values().begin(), probs.values().end());
  double total = 0;
  bool pos = false, neg = false;
  for (std::size_t i = 0; i < test.size(); ++i) {
    const int y = table.row(test[i]).label;
    r.labels.push_back(y);
    total += ad::bce(y, r.predictions[i]);
    (y == 1 ? pos : neg) = true;
  }
  r.bce = total / static_cast<double>(test.size());
  if (pos && neg) r.auc = eval::auc(r.predictions, r.labels);
  r.f1 = eval::f1(r.predictions, r.labels);
  return r;
}

InnerOptions warmup_options(const MetaConfig& cfg) {
  InnerOptions o;
  o.lr = cfg.warmup_lr;
  o.steps = cfg.warmup_epochs;
  o.adapt_graph = !cfg.ablations.shared_graph;
  return o;
}

void require_phases(const data::ItemPhases& p, std::uint64_t item) {
  if (p.a.empty() || p.b.empty() || p.c.empty() || p.test.empty())
    throw ContractError("item " + std::to_string(item) + ": warm-up phases A, B, C and the test set must be non-empty");
}

// Cold φ, then warm-up through A, A∪B, A∪B∪C. `visit` sees each state.
template <typename Visit>
ItemPhi run_phases(const model::Model& model, const ad::Binding& frozen, const data::InteractionTable& table,
                   std::uint64_t item, const data::ItemPhases& phases, const MetaConfig& cfg, Visit&& visit) {
  require_phases(phases, item);
  ItemPhi phi = as_constants(cold_phi(model, frozen, cfg, table.row(table.records_of(item).front())));
  visit("cold", phi);
  std::vector<std::size_t> support;
  const auto opts = warmup_options(cfg);
  for (const auto& [label, recs] : {std::pair{"A", &phases.a}, std::pair{"B", &phases.b}, std::pair{"C", &phases.c}}) {
    support.insert(support.end(), recs->begin(), recs->end());
    phi = as_constants(inner_update(model, frozen, table, support, phi, opts));
    visit(label, phi);
  }
  return phi;
}

}  // namespace

void MetaConfig::validate() const {
  auto positive = [](double v, const char* key) {
    if (!(v > 0)) throw ConfigError(std::string(key) + " must be > 0");
  };
  if (!(gamma >= 0 && gamma <= 1)) throw ConfigError("gamma must lie in [0, 1]");
  positive(inner_lr, "inner_lr");
  positive(meta_lr, "meta_lr");
  positive(pretrain_lr, "pretrain_lr");
  positive(warmup_lr, "warmup_lr");
  if (batch_size == 0) throw ConfigError("batch_size must be >= 1");
  if (shots == 0) throw ConfigError("shots must be >= 1");
  if (threshold <= 3 * shots) throw ConfigError("threshold must exceed 3 * shots");
  if (ablations.random_graph && ablations.shared_graph)
    throw ConfigError("random_graph and shared_graph are mutually exclusive");
}

model::ModelConfig MetaConfig::effective_model() const {
  auto m = model;
  if (ablations.no_sparsify) m.sparsify = false;
  if (ablations.no_mask) m.mask = false;
  return m;
}

bool is_hyper(const std::string& name) { return name.rfind("hyper/", 0) == 0 || name == kSharedGraph; }

std::vector<std::string> hyper_names(const ad::ParamStore& theta) {
  std::vector<std::string> out;
  for (const auto& n : theta.names())
    if (is_hyper(n)) out.push_back(n);
  return out;
}

std::vector<std::string> gnn_names(const ad::ParamStore& theta) {
  std::vector<std::string> out;
  for (const auto& n : theta.names())
    if (!is_hyper(n)) out.push_back(n);
  return out;
}

ad::ParamStore init_theta(const model::Model& model, const MetaConfig& cfg, ad::Rng& rng) {
  ad::ParamStore store;
  model.init(store, rng);
  if (cfg.ablations.shared_graph) {
    const std::size_t n = model.nodes();
    store.add(kSharedGraph, ad::init_uniform({n, n}, n, rng));
  }
  return store;
}

ad::Binding bind_traced(const ad::ParamStore& theta, const std::function<bool(const std::string&)>& traced) {
  return ad::Binding(theta, traced);
}
ad::Binding bind_all(const ad::ParamStore& theta) { return ad::Binding(theta); }
ad::Binding bind_frozen(const ad::ParamStore& theta) {
  return ad::Binding(theta, [](const std::string&) { return false; });
}

ad::Rng item_rng(std::uint64_t seed, std::uint64_t item) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(item), static_cast<std::uint32_t>(item >> 32)};
  return ad::Rng(seq);
}

Tensor random_adjacency(std::size_t nodes, std::uint64_t seed, std::uint64_t item) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(item), static_cast<std::uint32_t>(item >> 32), 1u};
  ad::Rng rng(seq);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Tensor t({nodes, nodes});
  for (auto& v : t.values()) v = u(rng);
  return t;
}

ItemPhi init_phi(const model::Model& model, const ad::Binding& theta, const MetaConfig& cfg,
                 const data::RawInteraction& item_record, ad::Rng& rng) {
  ItemPhi phi;
  phi.eid = Var::leaf(embed::fresh_id_embedding(model.dim(), rng), "phi/eid");
  if (cfg.ablations.random_graph)
    phi.bar1 = Var::leaf(random_adjacency(model.nodes(), cfg.seed, item_record.item), "phi/bar1");
  else if (cfg.ablations.shared_graph)
    phi.bar1 = theta(kSharedGraph);
  else
    // the two φ tensors are independent once generated
    phi.bar1 = model.generate_adjacency(theta, item_record, phi.eid.detach());
  return phi;
}

ItemPhi cold_phi(const model::Model& model, const ad::Binding& theta, const MetaConfig& cfg,
                 const data::RawInteraction& item_record) {
  auto rng = item_rng(cfg.seed, item_record.item);
  return init_phi(model, theta, cfg, item_record, rng);
}

Var phi_predict(const model::Model& model, const ad::Binding& theta, const data::InteractionTable& table,
                std::span<const std::size_t> records, const ItemPhi& phi) {
  return model.forward(theta, table, records, phi.bar1, phi.eid);
}

Var phi_loss(const model::Model& model, const ad::Binding& theta, const data::InteractionTable& table,
             std::span<const std::size_t> records, const ItemPhi& phi) {
  if (records.empty()) throw ContractError("loss over an empty record set");
  return ad::bce_mean(phi_predict(model, theta, table, records, phi), labels_of(table, records));
}

ItemPhi inner_update(const model::Model& model, const ad::Binding& theta, const data::InteractionTable& table,
                     std::span<const std::size_t> support, const ItemPhi& phi, const InnerOptions& opts) {
  if (support.empty()) throw ContractError("inner_update: empty support set");
  if (opts.differentiable && ad::grad_enabled()) {
    ItemPhi cur = phi;
    if (!cur.bar1.requires_grad()) cur.bar1 = Var::leaf(cur.bar1.value());
    if (!cur.eid.requires_grad()) cur.eid = Var::leaf(cur.eid.value());
    for (std::size_t s = 0; s < opts.steps; ++s) {
      const Var loss = phi_loss(model, theta, table, support, cur);
      const auto g = ad::grad(loss, std::vector<Var>{cur.bar1, cur.eid}, true);
      if (opts.adapt_graph) cur.bar1 = ad::sub(cur.bar1, ad::scale(g[0], opts.lr));
      cur.eid = ad::sub(cur.eid, ad::scale(g[1], opts.lr));
    }
    return cur;
  }

  // Steps run on detached copies; φ' = φ - Σ α1·g keeps φ's own trace.
  Tensor d_bar(phi.bar1.shape()), d_eid(phi.eid.shape());
  for (std::size_t s = 0; s < opts.steps; ++s) {
    ad::EnableGradGuard tracing;
    const Var bar = Var::leaf(minus(phi.bar1.value(), d_bar));
    const Var eid = Var::leaf(minus(phi.eid.value(), d_eid));
    const Var loss = phi_loss(model, theta, table, support, {bar, eid});
    const auto g = ad::grad(loss, std::vector<Var>{bar, eid});
    if (opts.adapt_graph) axpy(d_bar, opts.lr, g[0].value());
    axpy(d_eid, opts.lr, g[1].value());
  }
  ItemPhi out;
  out.bar1 = opts.adapt_graph ? ad::sub(phi.bar1, Var::constant(d_bar)) : phi.bar1;
  out.eid = ad::sub(phi.eid, Var::constant(d_eid));
  return out;
}

double mix_loss(double gamma, double support_loss, double query_loss) {
  return gamma * support_loss + (1.0 - gamma) * query_loss;
}

Var meta_loss(const model::Model& model, const ad::Binding& theta, const data::InteractionTable& table,
              const data::Task& task, const ItemPhi& phi, const ItemPhi& phi_after, double gamma) {
  return meta_terms(model, theta, table, task, phi, phi_after, gamma).total;
}

void write_log_csv(std::ostream& os, const std::vector<LogRow>& rows) {
  os << "stage,epoch,step,item,support_loss,query_loss,loss\n";
  for (const auto& r : rows) {
    os << r.stage << ',' << r.epoch << ',' << r.step << ',';
    if (r.item) os << *r.item;
    os << ',' << ad::format_double(r.support_loss) << ',';
    if (r.query_loss) os << ad::format_double(*r.query_loss);
    os << ',' << ad::format_double(r.loss) << '\n';
  }
}

std::vector<LogRow> pretrain(ad::ParamStore& theta, const model::Model& model, const data::InteractionTable& table,
                             const std::set<std::uint64_t>& old_items, const MetaConfig& cfg, ad::Rng& rng) {
  if (old_items.empty()) throw ConfigError("pretrain: no old items");
  cfg.validate();
  return pooled_train(theta, model, table, old_items, cfg, rng, [](const std::string& n) { return !is_hyper(n); },
                      cfg.pretrain_lr, cfg.pretrain_epochs, true, "pretrain");
}

std::vector<LogRow> meta_train(ad::ParamStore& theta, const model::Model& model, const data::InteractionTable& table,
                               const std::set<std::uint64_t>& old_items, const MetaConfig& cfg, ad::Rng& rng) {
  if (old_items.empty()) throw ConfigError("meta_train: no old-item tasks");
  cfg.validate();
  if (cfg.ablations.no_meta)
    return pooled_train(theta, model, table, old_items, cfg, rng, [](const std::string&) { return true; },
                        cfg.meta_lr, cfg.meta_epochs, false, "pooled");

  ad::Adam adam({cfg.meta_lr});
  const auto names = theta.trainable_names();
  std::vector<std::uint64_t> items(old_items.begin(), old_items.end());
  InnerOptions inner;
  inner.lr = cfg.inner_lr;
  inner.steps = cfg.inner_steps;
  inner.adapt_graph = !cfg.ablations.shared_graph;
  inner.differentiable = !cfg.first_order;

  std::vector<LogRow> log;
  std::size_t step = 0;
  for (std::size_t epoch = 0; epoch < cfg.meta_epochs; ++epoch) {
    std::shuffle(items.begin(), items.end(), rng);
    for (auto item : items) {
      const auto task = data::sample_task(table, item, cfg.n_support(), cfg.n_query(), rng);
      const ad::Binding b = bind_all(theta);
      const ItemPhi phi = init_phi(model, b, cfg, table.row(task.item_record), rng);
      ItemPhi after = phi;
      if (!cfg.ablations.no_inner) {
        if (cfg.first_order)
          after = inner_update(model, bind_frozen(theta), table, task.support, phi, inner);
        else
          after = inner_update(model, b, table, task.support, phi, inner);
      }
      const auto t = meta_terms(model, b, table, task, phi, after, cfg.gamma);
      adam.step(theta, ad::backward(t.total, b), names);

      LogRow row;
      row.stage = "meta";
      row.epoch = epoch;
      row.step = step++;
      row.item = item;
      row.support_loss = t.support.item();
      row.query_loss = t.query.item();
      row.loss = t.total.item();
      log.push_back(std::move(row));
    }
  }
  return log;
}

ItemEvaluation evaluate_phases(const ad::ParamStore& theta, const model::Model& model,
                               const data::InteractionTable& table, std::uint64_t item,
                               const data::ItemPhases& phases, const MetaConfig& cfg) {
  const ad::Binding frozen = bind_frozen(theta);
  ItemEvaluation out;
  out.item = item;
  run_phases(model, frozen, table, item, phases, cfg, [&](const char* label, const ItemPhi& phi) {
    out.phases.push_back(score(model, frozen, table, phases.test, phi, label));
    out.states.push_back(phi);
  });
  return out;
}

std::vector<ItemEvaluation> evaluate_items(const ad::ParamStore& theta, const model::Model& model,
                                           const data::InteractionTable& table, const data::PhasePlan& plan,
                                           const MetaConfig& cfg, std::size_t workers) {
  std::vector<std::pair<std::uint64_t, const data::ItemPhases*>> jobs;
  for (const auto& [item, phases] : plan.items) jobs.emplace_back(item, &phases);
  std::vector<ItemEvaluation> out(jobs.size());
  auto run = [&](std::size_t i) { out[i] = evaluate_phases(theta, model, table, jobs[i].first, *jobs[i].second, cfg); };
  workers = std::max<std::size_t>(1, std::min(workers, jobs.size()));
  if (workers == 1) {
    for (std::size_t i = 0; i < jobs.size(); ++i) run(i);
    return out;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mu;
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < workers; ++w)
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < jobs.size(); i = next++) {
        try {
          run(i);
        } catch (...) {
          std::lock_guard lock(failure_mu);
          if (!failure) failure = std::current_exception();
        }
      }
    });
  for (auto& t : pool) t.join();
  if (failure) std::rethrow_exception(failure);
  return out;
}

std::vector<PooledPhase> pool_phases(const std::vector<ItemEvaluation>& items) {
  std::vector<PooledPhase> out;
  for (const auto& it : items)
    for (std::size_t p = 0; p < it.phases.size(); ++p) {
      if (out.size() <= p) out.push_back({it.phases[p].phase, {}, {}});
      auto& dst = out[p];
      const auto& src = it.phases[p];
      dst.predictions.insert(dst.predictions.end(), src.predictions.begin(), src.predictions.end());
      dst.labels.insert(dst.labels.end(), src.labels.begin(), src.labels.end());
    }
  return out;
}

std::vector<PhaseResult> common_train(const ad::ParamStore& theta, const model::Model& model,
                                      const data::InteractionTable& table, std::uint64_t item,
                                      const data::ItemPhases& phases, const MetaConfig& cfg,
                                      const CommonOptions& opts) {
  require_phases(phases, item);
  if (opts.extra >= phases.test.size())
    throw ContractError("common_train: item " + std::to_string(item) + " has " + std::to_string(phases.test.size()) +
                        " test records, cannot hold out " + std::to_string(opts.extra));
  for (std::size_t i = 0; i < opts.sizes.size(); ++i)
    if (opts.sizes[i] == 0 || opts.sizes[i] > opts.extra || (i > 0 && opts.sizes[i] <= opts.sizes[i - 1]))
      throw ContractError("common_train: support sizes must increase within (0, extra]");

  const std::span<const std::size_t> extra(phases.test.data(), opts.extra);
  const std::span<const std::size_t> reduced(phases.test.data() + opts.extra, phases.test.size() - opts.extra);

  const ad::Binding frozen = bind_frozen(theta);
  ItemPhi phi = run_phases(model, frozen, table, item, phases, cfg, [](const char*, const ItemPhi&) {});
  std::vector<PhaseResult> out;
  out.push_back(score(model, frozen, table, reduced, phi, "C"));

  std::vector<std::size_t> base;
  for (const auto* p : {&phases.a, &phases.b, &phases.c}) base.insert(base.end(), p->begin(), p->end());
  ad::ParamStore tuned = theta;
  const auto opts_w = warmup_options(cfg);
  for (auto size : opts.sizes) {
    std::vector<std::size_t> support = base;
    support.insert(support.end(), extra.begin(), extra.begin() + static_cast<std::ptrdiff_t>(size));
    if (!opts.unfreeze_theta) {
      phi = as_constants(inner_update(model, frozen, table, support, phi, opts_w));
      out.push_back(score(model, frozen, table, reduced, phi, "common-" + std::to_string(size)));
      continue;
    }
    for (std::size_t s = 0; s < cfg.warmup_epochs; ++s) {
      const ad::Binding b = bind_all(tuned);
      const ItemPhi leaves{Var::leaf(phi.bar1.value()), Var::leaf(phi.eid.value())};
      const Var loss = phi_loss(model, b, table, support, leaves);
      std::vector<Var> wrt{leaves.bar1, leaves.eid};
      const auto names = tuned.trainable_names();
      for (const auto& n : names) wrt.push_back(b(n));
      const auto g = ad::grad(loss, wrt);
      Tensor bar = phi.bar1.value(), eid = phi.eid.value();
      if (opts_w.adapt_graph) axpy(bar, -cfg.warmup_lr, g[0].value());
      axpy(eid, -cfg.warmup_lr, g[1].value());
      phi = {Var::constant(bar), Var::constant(eid)};
      for (std::size_t i = 0; i < names.size(); ++i) axpy(tuned.value(names[i]), -cfg.warmup_lr, g[2 + i].value());
    }
    out.push_back(score(model, bind_frozen(tuned), table, reduced, phi, "common-" + std::to_string(size)));
  }
  return out;
}

}  // namespace emerg::meta
