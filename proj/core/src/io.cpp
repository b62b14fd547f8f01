#include "hinite/io.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <ctime>
#include <fstream>

#include <json.hpp>

#include "hinite/version.hpp"

namespace hinite {

using nlohmann::json;

std::string format_double(double v) {
  // 17 significant digits always round-trip; trim to the shortest form that
  // still parses back to the same bits.
  for (int prec = 1; prec <= 17; ++prec) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.*g", prec, v);
    double back = 0.0;
    std::sscanf(buf, "%lf", &back);
    if (back == v || (std::isnan(back) && std::isnan(v))) return buf;
  }
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::string now_iso8601() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

namespace {

constexpr char kTensorMagic[8] = {'H', 'N', 'T', 'E', 'N', 'S', 'R', '1'};

template <typename T>
void write_raw(std::ostream& out, const T& v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_raw(std::istream& in) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  return v;
}

double parse_double(const std::string& field, long line) {
  double v = 0.0;
  const char* begin = field.data();
  const char* end = begin + field.size();
  auto [p, ec] = std::from_chars(begin, end, v);
  if (ec != std::errc() || p != end) {
    throw ParseError("bad number '" + field + "'", line);
  }
  return v;
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      fields.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur += c;
    }
  }
  fields.push_back(cur);
  return fields;
}

std::ofstream open_out(const std::filesystem::path& path, std::ios_base::openmode mode = std::ios_base::out) {
  std::ofstream out(path, mode);
  if (!out) throw IoError("cannot write " + path.string());
  return out;
}

std::ifstream open_in(const std::filesystem::path& path, std::ios_base::openmode mode = std::ios_base::in) {
  std::ifstream in(path, mode);
  if (!in) throw IoError("cannot open " + path.string());
  return in;
}

void finish(std::ofstream& out, const std::filesystem::path& path) {
  out.flush();
  if (!out) throw IoError("short write to " + path.string());
}

}  // namespace

void save_tensors(const std::filesystem::path& path, std::span<const ParamTensor> tensors) {
  std::ofstream out = open_out(path, std::ios_base::binary);
  out.write(kTensorMagic, sizeof(kTensorMagic));
  write_raw<std::uint64_t>(out, tensors.size());
  for (const ParamTensor& t : tensors) {
    write_raw<std::uint32_t>(out, static_cast<std::uint32_t>(t.name.size()));
    out.write(t.name.data(), static_cast<std::streamsize>(t.name.size()));
    write_raw<std::int32_t>(out, t.shape.rows);
    write_raw<std::int32_t>(out, t.shape.cols);
    out.write(reinterpret_cast<const char*>(t.value.data()),
              static_cast<std::streamsize>(t.value.size() * sizeof(double)));
  }
  finish(out, path);
}

std::vector<ParamTensor> load_tensors(const std::filesystem::path& path) {
  std::ifstream in = open_in(path, std::ios_base::binary);
  char magic[8];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kTensorMagic, sizeof(magic)) != 0) {
    throw ParseError("not a named-tensor file: " + path.string());
  }
  const auto count = read_raw<std::uint64_t>(in);
  std::vector<ParamTensor> tensors;
  tensors.reserve(count);
  for (std::uint64_t i = 0; i < count; ++i) {
    const auto name_len = read_raw<std::uint32_t>(in);
    std::string name(name_len, '\0');
    in.read(name.data(), name_len);
    const auto rows = read_raw<std::int32_t>(in);
    const auto cols = read_raw<std::int32_t>(in);
    if (!in || rows < 0 || cols < 0) {
      throw ParseError("truncated tensor header in " + path.string());
    }
    ParamTensor t;
    t.name = std::move(name);
    t.shape = Shape{rows, cols};
    t.value.resize(static_cast<std::size_t>(t.shape.size()));
    in.read(reinterpret_cast<char*>(t.value.data()),
            static_cast<std::streamsize>(t.value.size() * sizeof(double)));
    if (!in) throw ParseError("truncated tensor data in " + path.string());
    tensors.push_back(std::move(t));
  }
  return tensors;
}

namespace {

std::vector<ParamTensor> weights_to_tensors(const SimWeights& w, int d) {
  std::vector<ParamTensor> out;
  auto push = [&out](std::string name, Shape shape, const std::vector<double>& v) {
    out.push_back(ParamTensor{std::move(name), shape, v});
  };
  push("w0", Shape{1, d}, w.w0);
  push("w1", Shape{1, d}, w.w1);
  push("wt", Shape{1, d}, w.wt);
  const int m = static_cast<int>(w.view_scale_hop1.size());
  push("e_hop1", Shape{1, m}, w.view_scale_hop1);
  push("e_hop2", Shape{1, m}, w.view_scale_hop2);
  for (int v = 0; v < m; ++v) {
    const auto& h1 = w.pair_w_hop1[static_cast<std::size_t>(v)];
    const int entries = static_cast<int>(h1.size()) / (d + 1);
    push("pair_hop1.view" + std::to_string(v), Shape{entries, d + 1}, h1);
    push("pair_hop2.view" + std::to_string(v),
         Shape{static_cast<int>(w.pair_w_hop2[static_cast<std::size_t>(v)].size()), 1},
         w.pair_w_hop2[static_cast<std::size_t>(v)]);
  }
  return out;
}

SimWeights weights_from_tensors(const std::vector<ParamTensor>& ts, int m) {
  auto find = [&ts](const std::string& name) -> const ParamTensor& {
    for (const auto& t : ts) {
      if (t.name == name) return t;
    }
    throw ParseError("missing tensor '" + name + "' in simulation weights");
  };
  SimWeights w;
  w.w0 = find("w0").value;
  w.w1 = find("w1").value;
  w.wt = find("wt").value;
  w.view_scale_hop1 = find("e_hop1").value;
  w.view_scale_hop2 = find("e_hop2").value;
  for (int v = 0; v < m; ++v) {
    w.pair_w_hop1.push_back(find("pair_hop1.view" + std::to_string(v)).value);
    w.pair_w_hop2.push_back(find("pair_hop2.view" + std::to_string(v)).value);
  }
  return w;
}

}  // namespace

void save_dataset(const std::filesystem::path& dir, const Dataset& data) {
  std::filesystem::create_directories(dir);
  const int n = data.n(), d = data.d();

  {
    std::ofstream out = open_out(dir / "covariates.csv");
    for (int c = 0; c < d; ++c) out << (c ? "," : "") << "x" << c;
    out << '\n';
    for (int i = 0; i < n; ++i) {
      for (int c = 0; c < d; ++c) {
        if (c) out << ',';
        out << format_double(data.X[static_cast<std::size_t>(i) * d + c]);
      }
      out << '\n';
    }
    finish(out, dir / "covariates.csv");
  }
  {
    std::ofstream out = open_out(dir / "treatments.csv");
    out << "t\n";
    for (int i = 0; i < n; ++i) out << data.T[static_cast<std::size_t>(i)] << '\n';
    finish(out, dir / "treatments.csv");
  }
  {
    std::ofstream out = open_out(dir / "outcomes.csv");
    out << "y,y0,y1,tau\n";
    for (int i = 0; i < n; ++i) {
      out << format_double(data.Y[static_cast<std::size_t>(i)]) << ','
          << format_double(data.Y0[static_cast<std::size_t>(i)]) << ','
          << format_double(data.Y1[static_cast<std::size_t>(i)]) << ','
          << format_double(data.tau[static_cast<std::size_t>(i)]) << '\n';
    }
    finish(out, dir / "outcomes.csv");
  }
  save_edges(dir / "edges.txt", data.graph);
  save_tensors(dir / "sim_weights.ntf", weights_to_tensors(data.weights, d));

  json manifest;
  manifest["kind"] = "dataset";
  manifest["tool_version"] = kVersion;
  manifest["created"] = now_iso8601();
  manifest["n"] = data.cfg.n;
  manifest["m"] = data.cfg.m;
  manifest["d"] = data.cfg.d;
  manifest["seed"] = data.cfg.seed;
  manifest["density"] = data.cfg.density;
  manifest["weight_dist"] = data.cfg.weight_dist == WeightDist::Gaussian ? "gaussian" : "uniform";
  manifest["treatment_noise"] = data.cfg.treatment_noise;
  manifest["split_ratios"] = {{"train", data.cfg.train_ratio},
                              {"val", data.cfg.val_ratio},
                              {"test", data.cfg.test_ratio}};
  manifest["split"] = {{"train", data.split.train}, {"val", data.split.val}, {"test", data.split.test}};
  manifest["files"] = {{"covariates", "covariates.csv"},
                       {"treatments", "treatments.csv"},
                       {"outcomes", "outcomes.csv"},
                       {"edges", "edges.txt"},
                       {"weights", "sim_weights.ntf"}};
  std::ofstream out = open_out(dir / "manifest.json");
  out << manifest.dump(2) << '\n';
  finish(out, dir / "manifest.json");
}

Dataset load_dataset(const std::filesystem::path& dir) {
  json manifest;
  {
    std::ifstream in = open_in(dir / "manifest.json");
    try {
      in >> manifest;
    } catch (const json::exception& e) {
      throw ParseError("bad dataset manifest: " + std::string(e.what()));
    }
  }
  Dataset data;
  try {
    data.cfg.n = manifest.at("n").get<int>();
    data.cfg.m = manifest.at("m").get<int>();
    data.cfg.d = manifest.at("d").get<int>();
    data.cfg.seed = manifest.at("seed").get<std::uint64_t>();
    data.cfg.density = manifest.at("density").get<double>();
    data.cfg.weight_dist =
        manifest.at("weight_dist").get<std::string>() == "uniform" ? WeightDist::Uniform : WeightDist::Gaussian;
    data.cfg.treatment_noise = manifest.at("treatment_noise").get<double>();
    data.cfg.train_ratio = manifest.at("split_ratios").at("train").get<double>();
    data.cfg.val_ratio = manifest.at("split_ratios").at("val").get<double>();
    data.cfg.test_ratio = manifest.at("split_ratios").at("test").get<double>();
    data.split.train = manifest.at("split").at("train").get<std::vector<int>>();
    data.split.val = manifest.at("split").at("val").get<std::vector<int>>();
    data.split.test = manifest.at("split").at("test").get<std::vector<int>>();
  } catch (const json::exception& e) {
    throw ParseError("bad dataset manifest field: " + std::string(e.what()));
  }
  const int n = data.cfg.n, d = data.cfg.d;

  {
    std::ifstream in = open_in(dir / "covariates.csv");
    std::string line;
    std::getline(in, line);  // header
    data.X.resize(static_cast<std::size_t>(n) * d);
    for (int i = 0; i < n; ++i) {
      if (!std::getline(in, line)) throw ParseError("covariates.csv: expected " + std::to_string(n) + " rows");
      auto fields = split_csv_line(line);
      if (static_cast<int>(fields.size()) != d) {
        throw ParseError("covariates.csv: expected " + std::to_string(d) + " columns", i + 2);
      }
      for (int c = 0; c < d; ++c) {
        data.X[static_cast<std::size_t>(i) * d + c] = parse_double(fields[static_cast<std::size_t>(c)], i + 2);
      }
    }
  }
  {
    std::ifstream in = open_in(dir / "treatments.csv");
    std::string line;
    std::getline(in, line);
    data.T.resize(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
      if (!std::getline(in, line)) throw ParseError("treatments.csv: expected " + std::to_string(n) + " rows");
      auto fields = split_csv_line(line);
      data.T[static_cast<std::size_t>(i)] = parse_double(fields.at(0), i + 2) != 0.0 ? 1 : 0;
    }
  }
  {
    std::ifstream in = open_in(dir / "outcomes.csv");
    std::string line;
    std::getline(in, line);
    data.Y.resize(static_cast<std::size_t>(n));
    data.Y0.resize(static_cast<std::size_t>(n));
    data.Y1.resize(static_cast<std::size_t>(n));
    data.tau.resize(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
      if (!std::getline(in, line)) throw ParseError("outcomes.csv: expected " + std::to_string(n) + " rows");
      auto fields = split_csv_line(line);
      if (fields.size() != 4) throw ParseError("outcomes.csv: expected 4 columns", i + 2);
      data.Y[static_cast<std::size_t>(i)] = parse_double(fields[0], i + 2);
      data.Y0[static_cast<std::size_t>(i)] = parse_double(fields[1], i + 2);
      data.Y1[static_cast<std::size_t>(i)] = parse_double(fields[2], i + 2);
      data.tau[static_cast<std::size_t>(i)] = parse_double(fields[3], i + 2);
    }
  }
  data.graph = load_edges(dir / "edges.txt", n, data.cfg.m);
  data.weights = weights_from_tensors(load_tensors(dir / "sim_weights.ntf"), data.cfg.m);
  return data;
}

void write_history_csv(const std::filesystem::path& path, std::span<const HistoryRow> rows) {
  std::ofstream out = open_out(path);
  out << "iteration,train_loss,hsic,val_mse\n";
  for (const HistoryRow& r : rows) {
    out << r.iteration << ',' << format_double(r.train_loss) << ',' << format_double(r.hsic) << ','
        << format_double(r.val_mse) << '\n';
  }
  finish(out, path);
}

void write_report_csv(const std::filesystem::path& path, const ExperimentReport& report) {
  std::ofstream out = open_out(path);
  out << "variant,seed,gamma,pehe,sqrt_pehe,ate_error,iterations,status\n";
  for (const CellResult& c : report.cells) {
    out << variant_name(c.variant) << ',' << c.seed << ',' << format_double(c.gamma) << ',';
    if (c.failed) {
      out << ",,," << c.iterations << ",failed\n";
    } else {
      out << format_double(c.pehe) << ',' << format_double(c.sqrt_pehe) << ','
          << format_double(c.ate) << ',' << c.iterations << ",ok\n";
    }
  }
  finish(out, path);
}

void write_timings_csv(const std::filesystem::path& path, const ExperimentReport& report) {
  std::ofstream out = open_out(path);
  out << "variant,seed,wall_ms\n";
  for (const CellResult& c : report.cells) {
    out << variant_name(c.variant) << ',' << c.seed << ',' << format_double(c.wall_ms) << '\n';
  }
  finish(out, path);
}

void write_summary_json(const std::filesystem::path& path, const ExperimentReport& report,
                        std::span<const GammaSweepRow> sweep) {
  json doc;
  doc["tool_version"] = kVersion;
  json methods = json::array();
  for (const VariantSummary& s : report.summary) {
    methods.push_back({{"variant", std::string(variant_name(s.variant))},
                       {"cells_ok", s.cells_ok},
                       {"pehe_mean", s.pehe_mean},
                       {"pehe_se", s.pehe_se},
                       {"sqrt_pehe_mean", s.sqrt_pehe_mean},
                       {"sqrt_pehe_se", s.sqrt_pehe_se},
                       {"ate_mean", s.ate_mean},
                       {"ate_se", s.ate_se}});
  }
  doc["methods"] = methods;
  if (!sweep.empty()) {
    json rows = json::array();
    double lo = sweep.front().pehe, hi = sweep.front().pehe;
    for (const GammaSweepRow& r : sweep) {
      rows.push_back({{"gamma", r.gamma},
                      {"pehe", r.pehe},
                      {"sqrt_pehe", r.sqrt_pehe},
                      {"ate_error", r.ate},
                      {"iterations", r.iterations}});
      lo = std::min(lo, r.pehe);
      hi = std::max(hi, r.pehe);
    }
    doc["gamma_sweep"] = {{"rows", rows}, {"pehe_max_min_ratio", lo > 0.0 ? hi / lo : 0.0}};
  }
  std::ofstream out = open_out(path);
  out << doc.dump(2) << '\n';
  finish(out, path);
}

void write_metrics_json(const std::filesystem::path& path, const TestMetrics& m) {
  json doc = {{"pehe", m.pehe}, {"sqrt_pehe", m.sqrt_pehe}, {"ate_error", m.ate}, {"test_units", m.test_units}};
  std::ofstream out = open_out(path);
  out << doc.dump(2) << '\n';
  finish(out, path);
}

void write_metrics_csv(const std::filesystem::path& path, const TestMetrics& m) {
  std::ofstream out = open_out(path);
  out << "pehe,sqrt_pehe,ate_error,test_units\n";
  out << format_double(m.pehe) << ',' << format_double(m.sqrt_pehe) << ',' << format_double(m.ate)
      << ',' << m.test_units << '\n';
  finish(out, path);
}

void write_gamma_sweep_csv(const std::filesystem::path& path, std::span<const GammaSweepRow> rows) {
  std::ofstream out = open_out(path);
  out << "gamma,pehe,sqrt_pehe,ate_error,iterations\n";
  for (const GammaSweepRow& r : rows) {
    out << format_double(r.gamma) << ',' << format_double(r.pehe) << ',' << format_double(r.sqrt_pehe)
        << ',' << format_double(r.ate) << ',' << r.iterations << '\n';
  }
  finish(out, path);
}

void write_metric_svg(const std::filesystem::path& path, std::span<const double> xs,
                      std::span<const double> ys, const std::string& x_label,
                      const std::string& y_label) {
  if (xs.size() != ys.size() || xs.empty()) {
    throw ContractViolation("svg: need matching non-empty series");
  }
  const double width = 480, height = 320, margin = 56;
  double xmin = xs[0], xmax = xs[0], ymin = ys[0], ymax = ys[0];
  for (std::size_t i = 0; i < xs.size(); ++i) {
    xmin = std::min(xmin, xs[i]);
    xmax = std::max(xmax, xs[i]);
    ymin = std::min(ymin, ys[i]);
    ymax = std::max(ymax, ys[i]);
  }
  if (xmax == xmin) xmax = xmin + 1.0;
  if (ymax == ymin) ymax = ymin + 1.0;
  const double pad = 0.05 * (ymax - ymin);
  ymin -= pad;
  ymax += pad;
  auto px = [&](double x) { return margin + (x - xmin) / (xmax - xmin) * (width - 2 * margin); };
  auto py = [&](double y) { return height - margin - (y - ymin) / (ymax - ymin) * (height - 2 * margin); };

  std::ofstream out = open_out(path);
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height << "\">\n";
  out << "  <rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  out << "  <line x1=\"" << margin << "\" y1=\"" << height - margin << "\" x2=\"" << width - margin
      << "\" y2=\"" << height - margin << "\" stroke=\"black\"/>\n";
  out << "  <line x1=\"" << margin << "\" y1=\"" << margin << "\" x2=\"" << margin << "\" y2=\""
      << height - margin << "\" stroke=\"black\"/>\n";
  out << "  <polyline fill=\"none\" stroke=\"#1f6fb2\" stroke-width=\"2\" points=\"";
  for (std::size_t i = 0; i < xs.size(); ++i) {
    out << px(xs[i]) << ',' << py(ys[i]) << ' ';
  }
  out << "\"/>\n";
  for (std::size_t i = 0; i < xs.size(); ++i) {
    out << "  <circle cx=\"" << px(xs[i]) << "\" cy=\"" << py(ys[i]) << "\" r=\"3\" fill=\"#1f6fb2\"/>\n";
    out << "  <text x=\"" << px(xs[i]) << "\" y=\"" << height - margin + 16
        << "\" font-size=\"10\" text-anchor=\"middle\">" << format_double(xs[i]) << "</text>\n";
  }
  out << "  <text x=\"" << width / 2 << "\" y=\"" << height - 12
      << "\" font-size=\"12\" text-anchor=\"middle\">" << x_label << "</text>\n";
  out << "  <text x=\"14\" y=\"" << height / 2 << "\" font-size=\"12\" text-anchor=\"middle\" "
      << "transform=\"rotate(-90 14 " << height / 2 << ")\">" << y_label << "</text>\n";
  out << "  <text x=\"" << margin - 6 << "\" y=\"" << py(ymin + pad) + 4
      << "\" font-size=\"10\" text-anchor=\"end\">" << format_double(ymin + pad) << "</text>\n";
  out << "  <text x=\"" << margin - 6 << "\" y=\"" << py(ymax - pad) + 4
      << "\" font-size=\"10\" text-anchor=\"end\">" << format_double(ymax - pad) << "</text>\n";
  out << "</svg>\n";
  finish(out, path);
}

}  // namespace hinite
