#include "hinite/evaluate.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <mutex>
#include <thread>

namespace hinite {

double pehe(std::span<const double> tau, std::span<const double> tau_hat) {
  if (tau.size() != tau_hat.size() || tau.empty()) {
    throw DimensionError("pehe: " + std::to_string(tau.size()) + " vs " +
                         std::to_string(tau_hat.size()) + " entries");
  }
  double acc = 0.0;
  for (std::size_t i = 0; i < tau.size(); ++i) {
    const double e = tau[i] - tau_hat[i];
    acc += e * e;
  }
  return acc / static_cast<double>(tau.size());
}

double ate_error(std::span<const double> tau, std::span<const double> tau_hat) {
  if (tau.size() != tau_hat.size() || tau.empty()) {
    throw DimensionError("ate_error: " + std::to_string(tau.size()) + " vs " +
                         std::to_string(tau_hat.size()) + " entries");
  }
  double a = 0.0, b = 0.0;
  for (std::size_t i = 0; i < tau.size(); ++i) {
    a += tau[i];
    b += tau_hat[i];
  }
  return std::abs(a / static_cast<double>(tau.size()) - b / static_cast<double>(tau.size()));
}

std::string_view variant_name(Variant v) {
  switch (v) {
    case Variant::Hinite: return "HINITE";
    case Variant::HinitePg: return "HINITE-PG";
    case Variant::HiniteNhg: return "HINITE-NHG";
    case Variant::HiniteNb: return "HINITE-NB";
    case Variant::GcnProj: return "GCN_Proj";
    case Variant::MgcnC: return "MGCN_C";
    case Variant::MgcnM: return "MGCN_M";
    case Variant::Tarnet: return "TARNet";
  }
  return "?";
}

Variant variant_from_name(std::string_view name) {
  for (Variant v : kAllVariants) {
    if (variant_name(v) == name) return v;
  }
  std::string valid;
  for (Variant v : kAllVariants) {
    if (!valid.empty()) valid += ", ";
    valid += variant_name(v);
  }
  throw ConfigError("unknown variant '" + std::string(name) + "'; valid names: " + valid);
}

bool variant_uses_balance(Variant v) {
  return v != Variant::HiniteNb && v != Variant::Tarnet;
}

BuiltVariant build_variant(Variant v, const ModelConfig& base, const HeteroGraph& g,
                           std::uint64_t seed) {
  Arch arch;
  arch.cfg = base;
  HeteroGraph effective;
  switch (v) {
    case Variant::Hinite:
    case Variant::HiniteNb:
      arch.interference = InterferenceKind::HiaAttention;
      arch.mix = ViewMix::Attention;
      effective = g;
      break;
    case Variant::HinitePg:
      arch.interference = InterferenceKind::HiaAttention;
      arch.mix = ViewMix::Attention;
      effective = as_hetero(projection(g));
      break;
    case Variant::HiniteNhg:
    case Variant::GcnProj:
      arch.interference = InterferenceKind::GraphConv;
      arch.mix = ViewMix::Mean;
      effective = as_hetero(projection(g));
      break;
    case Variant::MgcnC:
      arch.interference = InterferenceKind::GraphConv;
      arch.mix = ViewMix::Concat;
      effective = g;
      break;
    case Variant::MgcnM:
      arch.interference = InterferenceKind::GraphConv;
      arch.mix = ViewMix::Mean;
      effective = g;
      break;
    case Variant::Tarnet:
      arch.interference = InterferenceKind::None;
      effective = g;
      break;
  }
  arch.cfg.views = arch.interference == InterferenceKind::None ? 1 : effective.view_count();
  if (!variant_uses_balance(v)) arch.cfg.gamma = 0.0;
  const std::uint64_t init_seed = derive_seed(seed, "init:" + arch.fingerprint());
  BuiltVariant built{Model(arch, init_seed), make_graph_context(std::move(effective), arch.interference)};
  return built;
}

CellResult evaluate_cell(Variant v, Model& model, const GraphContext& ctx, const Dataset& data,
                         const TrainResult& tr) {
  CellResult cell;
  cell.variant = v;
  cell.gamma = model.arch().cfg.gamma;
  cell.iterations = tr.iterations_run;
  std::vector<double> tau_hat = model.estimate_ite_values(ctx, data.X, data.T);
  std::vector<double> tau_test(data.split.test.size()), tau_hat_test(data.split.test.size());
  for (std::size_t k = 0; k < data.split.test.size(); ++k) {
    const std::size_t i = static_cast<std::size_t>(data.split.test[k]);
    tau_test[k] = data.tau[i];
    tau_hat_test[k] = tau_hat[i];
  }
  cell.pehe = pehe(tau_test, tau_hat_test);
  cell.sqrt_pehe = std::sqrt(cell.pehe);
  cell.ate = ate_error(tau_test, tau_hat_test);
  return cell;
}

namespace {

CellResult run_cell(Variant v, const Dataset& data, const ModelConfig& base,
                    const TrainConfig& train, std::uint64_t seed,
                    std::span<const double> gamma_search) {
  const auto t0 = std::chrono::steady_clock::now();
  CellResult cell;
  try {
    std::vector<double> gammas;
    if (variant_uses_balance(v) && !gamma_search.empty()) {
      gammas.assign(gamma_search.begin(), gamma_search.end());
    } else {
      gammas.push_back(variant_uses_balance(v) ? base.gamma : 0.0);
    }
    bool have_best = false;
    double best_val = 0.0;
    for (double gamma : gammas) {
      ModelConfig cfg = base;
      cfg.gamma = gamma;
      BuiltVariant built = build_variant(v, cfg, data.graph, seed);
      TrainConfig tc = train;
      tc.seed = seed;
      TrainResult tr = train_model(built.model, built.ctx, data, tc);
      if (!have_best || tr.best_val_mse < best_val) {
        have_best = true;
        best_val = tr.best_val_mse;
        cell = evaluate_cell(v, built.model, built.ctx, data, tr);
      }
    }
  } catch (const NumericError& e) {
    cell.failed = true;
    cell.error = e.what();
  }
  cell.variant = v;
  cell.seed = seed;
  cell.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
  return cell;
}

double sample_se(std::span<const double> xs, double mean) {
  if (xs.size() < 2) return 0.0;
  double acc = 0.0;
  for (double x : xs) acc += (x - mean) * (x - mean);
  const double var = acc / static_cast<double>(xs.size() - 1);
  return std::sqrt(var / static_cast<double>(xs.size()));
}

}  // namespace

ExperimentReport run_experiment(const ExperimentConfig& cfg) {
  if (cfg.seeds.empty()) {
    throw ConfigError("experiment needs at least one seed");
  }
  // Per-seed datasets are shared, byte-identical, across all variants.
  std::vector<Dataset> datasets;
  datasets.reserve(cfg.seeds.size());
  for (std::uint64_t seed : cfg.seeds) {
    SimConfig sc = cfg.sim;
    sc.seed = seed;
    datasets.push_back(simulate_dataset(sc));
  }

  struct Job {
    std::size_t variant_idx, seed_idx;
  };
  std::vector<Job> jobs;
  for (std::size_t vi = 0; vi < cfg.variants.size(); ++vi) {
    for (std::size_t si = 0; si < cfg.seeds.size(); ++si) jobs.push_back(Job{vi, si});
  }

  ExperimentReport report;
  report.cells.resize(jobs.size());
  std::mutex queue_mutex;
  std::size_t next = 0;
  int threads = cfg.threads > 0 ? cfg.threads : static_cast<int>(std::thread::hardware_concurrency());
  threads = std::max(1, std::min<int>(threads, static_cast<int>(jobs.size())));

  auto worker = [&] {
    for (;;) {
      std::size_t j;
      {
        std::lock_guard<std::mutex> lock(queue_mutex);
        if (next >= jobs.size()) return;
        j = next++;
      }
      const Job& job = jobs[j];
      report.cells[j] = run_cell(cfg.variants[job.variant_idx], datasets[job.seed_idx], cfg.model,
                                 cfg.train, cfg.seeds[job.seed_idx], cfg.gamma_search);
    }
  };
  if (threads == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(threads));
    for (int t = 0; t < threads; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }

  for (std::size_t vi = 0; vi < cfg.variants.size(); ++vi) {
    VariantSummary s;
    s.variant = cfg.variants[vi];
    std::vector<double> pehes, sqrts, ates;
    for (std::size_t si = 0; si < cfg.seeds.size(); ++si) {
      const CellResult& cell = report.cells[vi * cfg.seeds.size() + si];
      if (cell.failed) continue;
      pehes.push_back(cell.pehe);
      sqrts.push_back(cell.sqrt_pehe);
      ates.push_back(cell.ate);
    }
    s.cells_ok = static_cast<int>(pehes.size());
    if (s.cells_ok > 0) {
      auto mean = [](const std::vector<double>& xs) {
        double acc = 0.0;
        for (double x : xs) acc += x;
        return acc / static_cast<double>(xs.size());
      };
      s.pehe_mean = mean(pehes);
      s.sqrt_pehe_mean = mean(sqrts);
      s.ate_mean = mean(ates);
      s.pehe_se = sample_se(pehes, s.pehe_mean);
      s.sqrt_pehe_se = sample_se(sqrts, s.sqrt_pehe_mean);
      s.ate_se = sample_se(ates, s.ate_mean);
    }
    report.summary.push_back(s);
  }
  return report;
}

std::vector<GammaSweepRow> gamma_sweep(const Dataset& data, const ModelConfig& base,
                                       const TrainConfig& train, std::span<const double> gammas) {
  std::vector<GammaSweepRow> rows;
  for (double gamma : gammas) {
    if (gamma < 0.0) throw ConfigError("gamma_sweep: gamma must be >= 0");
    ModelConfig cfg = base;
    cfg.gamma = gamma;
    // gamma is excluded from the architecture fingerprint, so every sweep
    // point starts from identical parameters.
    BuiltVariant built = build_variant(Variant::Hinite, cfg, data.graph, data.cfg.seed);
    TrainConfig tc = train;
    tc.seed = data.cfg.seed;  // cells key their streams off the realization seed
    TrainResult tr = train_model(built.model, built.ctx, data, tc);
    CellResult cell = evaluate_cell(Variant::Hinite, built.model, built.ctx, data, tr);
    rows.push_back(GammaSweepRow{gamma, cell.pehe, cell.sqrt_pehe, cell.ate, cell.iterations});
  }
  return rows;
}

}  // namespace hinite
