#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "hinite/evaluate.hpp"
#include "hinite/model.hpp"
#include "hinite/simulate.hpp"
#include "hinite/train.hpp"

namespace hinite {

// Shortest exact decimal; round-trips float64 bit-exactly.
std::string format_double(double v);

std::string now_iso8601();

// Flat named-tensor file (little-endian float64, row-major).
void save_tensors(const std::filesystem::path& path, std::span<const ParamTensor> tensors);
std::vector<ParamTensor> load_tensors(const std::filesystem::path& path);

// Dataset bundle: manifest.json, covariates.csv, treatments.csv,
// outcomes.csv, edges.txt, sim_weights.ntf.
void save_dataset(const std::filesystem::path& dir, const Dataset& data);
Dataset load_dataset(const std::filesystem::path& dir);

void write_history_csv(const std::filesystem::path& path, std::span<const HistoryRow> rows);

// report.csv holds only deterministic columns; wall-clock timings go to a
// separate diagnostics file.
void write_report_csv(const std::filesystem::path& path, const ExperimentReport& report);
void write_timings_csv(const std::filesystem::path& path, const ExperimentReport& report);
void write_summary_json(const std::filesystem::path& path, const ExperimentReport& report,
                        std::span<const GammaSweepRow> sweep);

struct TestMetrics {
  double pehe = 0.0, sqrt_pehe = 0.0, ate = 0.0;
  int test_units = 0;
};

void write_metrics_json(const std::filesystem::path& path, const TestMetrics& m);
void write_metrics_csv(const std::filesystem::path& path, const TestMetrics& m);

void write_gamma_sweep_csv(const std::filesystem::path& path, std::span<const GammaSweepRow> rows);

// Minimal static line chart.
void write_metric_svg(const std::filesystem::path& path, std::span<const double> xs,
                      std::span<const double> ys, const std::string& x_label,
                      const std::string& y_label);

}  // namespace hinite
