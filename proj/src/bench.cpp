#include "qgemm/bench.hpp"

#include <atomic>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <memory>
#include <mutex>
#include <ostream>
#include <sstream>
#include <thread>

#include "qgemm/errors.hpp"
#include "qgemm/rng.hpp"

namespace qgemm::bench {

namespace {

using nlohmann::json;

std::string fmt_fixed4(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.4f", v);
  return buf;
}

std::string fmt_sci6(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.5e", v);
  return buf;
}

unsigned thread_cap() {
  unsigned cap = std::thread::hardware_concurrency();
  if (cap == 0) cap = 1;
  if (const char* env = std::getenv("QGEMM_LAB_THREADS")) {
    char* end = nullptr;
    const unsigned long parsed = std::strtoul(env, &end, 10);
    if (end != env && parsed >= 1 && parsed <= 256)
      cap = static_cast<unsigned>(parsed);
  }
  return cap;
}

// Runs fn(0..count-1) on up to `cap` threads; rethrows the first failure.
void parallel_for(std::size_t count, unsigned cap,
                  const std::function<void(std::size_t)>& fn) {
  const unsigned workers =
      static_cast<unsigned>(std::min<std::size_t>(count, cap));
  if (workers <= 1) {
    for (std::size_t i = 0; i < count; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr first_error;
  std::mutex error_mutex;
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (unsigned w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      while (true) {
        const std::size_t i = next.fetch_add(1);
        if (i >= count) return;
        try {
          fn(i);
        } catch (...) {
          std::lock_guard lock(error_mutex);
          if (!first_error) first_error = std::current_exception();
          return;
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  if (first_error) std::rethrow_exception(first_error);
}

}  // namespace

std::string_view to_string(PermMode mode) {
  switch (mode) {
    case PermMode::none: return "none";
    case PermMode::identity: return "identity";
    case PermMode::reversed: return "reversed";
    case PermMode::shuffle: return "shuffle";
  }
  return "none";
}

PermMode perm_mode_from_string(std::string_view s) {
  if (s == "none") return PermMode::none;
  if (s == "identity") return PermMode::identity;
  if (s == "reversed") return PermMode::reversed;
  if (s == "shuffle") return PermMode::shuffle;
  throw FormatError("unknown perm mode: " + std::string(s));
}

RunConfig default_config() {
  RunConfig config;
  config.shapes = {{1, 512, 64, 128},
                   {4, 512, 64, 128},
                   {8, 1024, 128, 128},
                   {3, 384, 64, 128}};
  config.tile = kernels::TileParams{64, 128, 2};
  const auto all = kernels::VariantFlags::all();
  config.variants.assign(all.begin(), all.end());
  return config;
}

json config_to_json(const RunConfig& config) {
  json j;
  j["seed"] = config.seed;
  j["shapes"] = json::array();
  for (const auto& s : config.shapes)
    j["shapes"].push_back({{"m", s.m}, {"k", s.k}, {"n", s.n}, {"g", s.g}});
  j["tile"] = {{"threads", config.tile.threads},
               {"bk", config.tile.bk},
               {"m_count", config.tile.m_count}};
  j["variants"] = json::array();
  for (const auto& v : config.variants)
    j["variants"].push_back({{"smb", v.smb}, {"vml", v.vml}, {"ila", v.ila}});
  j["perm_mode"] =
      config.perm_mode ? std::string(to_string(*config.perm_mode)) : "cycle";
  j["weights"] = {{"atomic", config.weights.atomic},
                  {"load16", config.weights.load16},
                  {"load32", config.weights.load32},
                  {"valu_scalar", config.weights.valu_scalar},
                  {"valu_packed", config.weights.valu_packed},
                  {"shared", config.weights.shared}};
  j["output_dir"] = config.output_dir;
  j["tolerance"] = config.tolerance;
  return j;
}

RunConfig config_from_json(const json& j) {
  RunConfig config = default_config();
  try {
    if (j.contains("seed")) config.seed = j.at("seed").get<std::uint64_t>();
    if (j.contains("shapes")) {
      config.shapes.clear();
      for (const auto& s : j.at("shapes"))
        config.shapes.push_back(ShapeSpec{s.at("m").get<std::uint32_t>(),
                                          s.at("k").get<std::uint32_t>(),
                                          s.at("n").get<std::uint32_t>(),
                                          s.at("g").get<std::uint32_t>()});
    }
    if (j.contains("tile")) {
      const auto& t = j.at("tile");
      if (t.contains("threads"))
        config.tile.threads = t.at("threads").get<std::uint32_t>();
      if (t.contains("bk")) config.tile.bk = t.at("bk").get<std::uint32_t>();
      if (t.contains("m_count"))
        config.tile.m_count = t.at("m_count").get<std::uint32_t>();
    }
    if (j.contains("variants")) {
      config.variants.clear();
      if (j.at("variants").is_string()) {
        if (j.at("variants").get<std::string>() != "all")
          throw FormatError("variants must be \"all\" or an array");
        const auto all = kernels::VariantFlags::all();
        config.variants.assign(all.begin(), all.end());
      } else {
        for (const auto& v : j.at("variants"))
          config.variants.push_back(kernels::VariantFlags{
              v.at("smb").get<bool>(), v.at("vml").get<bool>(),
              v.at("ila").get<bool>()});
      }
    }
    if (j.contains("perm_mode")) {
      const auto s = j.at("perm_mode").get<std::string>();
      if (s == "cycle")
        config.perm_mode.reset();
      else
        config.perm_mode = perm_mode_from_string(s);
    }
    if (j.contains("weights")) {
      const auto& w = j.at("weights");
      if (w.contains("atomic")) config.weights.atomic = w.at("atomic");
      if (w.contains("load16")) config.weights.load16 = w.at("load16");
      if (w.contains("load32")) config.weights.load32 = w.at("load32");
      if (w.contains("valu_scalar"))
        config.weights.valu_scalar = w.at("valu_scalar");
      if (w.contains("valu_packed"))
        config.weights.valu_packed = w.at("valu_packed");
      if (w.contains("shared")) config.weights.shared = w.at("shared");
    }
    if (j.contains("output_dir"))
      config.output_dir = j.at("output_dir").get<std::string>();
    if (j.contains("tolerance"))
      config.tolerance = j.at("tolerance").get<double>();
  } catch (const json::exception& e) {
    throw FormatError(std::string("bad config: ") + e.what());
  }
  if (config.shapes.empty()) throw FormatError("config needs at least one shape");
  if (config.variants.empty())
    throw FormatError("config needs at least one variant");
  return config;
}

RunConfig load_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open config: " + path);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw FormatError(std::string("config is not valid JSON: ") + e.what());
  }
  return config_from_json(j);
}

std::uint64_t weight_seed(std::uint64_t seed, std::size_t shape_index) {
  return derive_seed(seed, 2 * shape_index);
}

std::uint64_t activation_seed(std::uint64_t seed, std::size_t shape_index) {
  return derive_seed(seed, 2 * shape_index + 1);
}

gptq::QuantizedWeight make_weights(std::uint64_t wseed, const ShapeSpec& shape,
                                   PermMode mode) {
  SplitMix64 rng(wseed);
  gptq::UnpackedWeight u;
  u.k = shape.k;
  u.n = shape.n;
  u.group_size = shape.g;
  if (shape.g == 0 || shape.k % shape.g != 0)
    throw ShapeError("group size must divide k");
  const std::size_t groups = shape.k / shape.g;
  u.q.resize(std::size_t{shape.k} * shape.n);
  for (auto& q : u.q) q = next_code(rng);
  u.zeros.resize(groups * shape.n);
  for (auto& z : u.zeros) z = next_code(rng);
  u.scales.resize(groups * shape.n);
  for (auto& s : u.scales) s = next_scale(rng);
  switch (mode) {
    case PermMode::none:
      break;
    case PermMode::identity: {
      std::vector<std::uint32_t> perm(shape.k);
      for (std::uint32_t i = 0; i < shape.k; ++i) perm[i] = i;
      u.perm = std::move(perm);
      break;
    }
    case PermMode::reversed: {
      std::vector<std::uint32_t> perm(shape.k);
      for (std::uint32_t i = 0; i < shape.k; ++i) perm[i] = shape.k - 1 - i;
      u.perm = std::move(perm);
      break;
    }
    case PermMode::shuffle:
      u.perm = random_permutation(rng, shape.k);
      break;
  }
  return gptq::pack(u);
}

HalfMatrix make_activations(std::uint64_t aseed, const ShapeSpec& shape) {
  SplitMix64 rng(aseed);
  HalfMatrix a(shape.m, shape.k);
  for (auto& v : a.data()) v = next_activation(rng);
  return a;
}

PermMode perm_mode_for_shape(const RunConfig& config, std::size_t shape_index) {
  if (config.perm_mode) return *config.perm_mode;
  static constexpr PermMode kCycle[3] = {PermMode::none, PermMode::identity,
                                         PermMode::shuffle};
  return kCycle[shape_index % 3];
}

std::string weights_file_name(const ShapeSpec& shape, std::size_t shape_index) {
  return "weights_s" + std::to_string(shape_index) + "_k" +
         std::to_string(shape.k) + "_n" + std::to_string(shape.n) + "_g" +
         std::to_string(shape.g) + ".gq4s";
}

namespace {

struct ShapeData {
  kernels::GemmProblem problem;
  PermMode perm_mode;
  std::vector<float> oracle;
  HalfMatrix canonical[2];  // indexed by flags.smb
};

std::unique_ptr<ShapeData> build_shape_data(
    const RunConfig& config, std::size_t shape_index,
    const std::optional<std::string>& weights_dir = {}) {
  const ShapeSpec& shape = config.shapes[shape_index];
  const PermMode mode = perm_mode_for_shape(config, shape_index);
  auto weights = make_weights(weight_seed(config.seed, shape_index), shape, mode);
  if (weights_dir) {
    const std::string path =
        (std::filesystem::path(*weights_dir) /
         weights_file_name(shape, shape_index)).string();
    const auto loaded = gptq::load_file(path);
    if (!(loaded == weights))
      throw FormatError(path + " does not match the configured seed");
    weights = loaded;
  }
  auto acts = make_activations(activation_seed(config.seed, shape_index), shape);
  auto data = std::make_unique<ShapeData>(ShapeData{
      kernels::GemmProblem{std::move(acts), std::move(weights)}, mode, {}, {}});
  data->oracle = kernels::oracle_gemm_f32(data->problem);
  data->canonical[0] = kernels::oracle_gemm_f16_canonical(
      data->problem, config.tile, kernels::VariantFlags{false, false, false});
  data->canonical[1] = kernels::oracle_gemm_f16_canonical(
      data->problem, config.tile, kernels::VariantFlags{true, false, false});
  return data;
}

CellResult run_cell(const RunConfig& config, std::uint32_t shape_id,
                    const ShapeData& data, kernels::VariantFlags flags) {
  CellResult cell;
  cell.shape_id = shape_id;
  cell.shape = config.shapes[shape_id];
  cell.flags = flags;
  cell.perm_mode = data.perm_mode;

  sim::DeviceContext device;
  const auto result =
      kernels::gemm_half_q_half(data.problem, config.tile, flags, device);
  cell.measured = result.stats.counters;

  const perf::ProblemDims dims{data.problem.m(), data.problem.k(),
                               data.problem.n()};
  const bool perm_present = data.problem.b.perm().has_value();
  cell.predicted = perf::predict(dims, config.tile, flags, perm_present);
  cell.counters_match = (cell.measured == cell.predicted);

  cell.max_abs_err = kernels::max_abs_error(result.c, data.oracle);
  cell.bit_exact_canonical = (result.c == data.canonical[flags.smb ? 1 : 0]);
  cell.cost = perf::cost_proxy(cell.measured, config.weights);

  const auto base = perf::predict(dims, config.tile,
                                  kernels::VariantFlags::baseline(), perm_present);
  cell.atomic_reduction_pct =
      perf::reduction_pct(static_cast<double>(base.global_atomic),
                          static_cast<double>(cell.measured.global_atomic));
  cell.load_reduction_pct = perf::reduction_pct(
      static_cast<double>(base.global_load_16 + base.global_load_32),
      static_cast<double>(cell.measured.global_load_16 +
                          cell.measured.global_load_32));
  cell.valu_reduction_pct = perf::reduction_pct(
      static_cast<double>(base.valu_scalar + base.valu_packed),
      static_cast<double>(cell.measured.valu_scalar +
                          cell.measured.valu_packed));
  cell.cost_reduction_pct = perf::reduction_pct(
      perf::cost_proxy(base, config.weights), cell.cost);
  return cell;
}

}  // namespace

BenchReport run_benchmark(const RunConfig& config,
                          const std::optional<std::string>& weights_dir) {
  const unsigned cap = thread_cap();

  std::vector<std::unique_ptr<ShapeData>> shape_data(config.shapes.size());
  parallel_for(config.shapes.size(), cap, [&](std::size_t i) {
    shape_data[i] = build_shape_data(config, i, weights_dir);
  });

  BenchReport report;
  report.config = config;
  const std::size_t cell_count = config.shapes.size() * config.variants.size();
  report.cells.resize(cell_count);
  parallel_for(cell_count, cap, [&](std::size_t idx) {
    const auto shape_id = static_cast<std::uint32_t>(idx / config.variants.size());
    const std::size_t variant_id = idx % config.variants.size();
    report.cells[idx] = run_cell(config, shape_id, *shape_data[shape_id],
                                 config.variants[variant_id]);
  });

  report.all_counters_match = true;
  report.all_bit_exact = true;
  report.worst_abs_err = 0.0;
  for (const auto& cell : report.cells) {
    report.all_counters_match &= cell.counters_match;
    report.all_bit_exact &= cell.bit_exact_canonical;
    report.worst_abs_err = std::max(report.worst_abs_err, cell.max_abs_err);
  }
  report.within_tolerance = report.worst_abs_err <= config.tolerance;
  return report;
}

std::string render_csv(const BenchReport& report) {
  std::string out =
      "shape_id,m,k,n,g,smb,vml,ila,"
      "global_atomic,global_load_16,global_load_32,valu_scalar,valu_packed,"
      "shared_read,shared_write,barriers,"
      "predicted_global_atomic,predicted_global_load_16,"
      "predicted_global_load_32,predicted_valu_scalar,predicted_valu_packed,"
      "predicted_shared_read,predicted_shared_write,predicted_barriers,"
      "counters_match,max_abs_err,bit_exact_canonical,cost,"
      "atomic_reduction_pct,load_reduction_pct,valu_reduction_pct,"
      "cost_reduction_pct\n";
  for (const auto& cell : report.cells) {
    std::string line;
    const auto add = [&line](const std::string& field) {
      if (!line.empty()) line += ',';
      line += field;
    };
    add(std::to_string(cell.shape_id));
    add(std::to_string(cell.shape.m));
    add(std::to_string(cell.shape.k));
    add(std::to_string(cell.shape.n));
    add(std::to_string(cell.shape.g));
    add(cell.flags.smb ? "1" : "0");
    add(cell.flags.vml ? "1" : "0");
    add(cell.flags.ila ? "1" : "0");
    const auto counters = [&](const sim::CounterSet& c) {
      add(std::to_string(c.global_atomic));
      add(std::to_string(c.global_load_16));
      add(std::to_string(c.global_load_32));
      add(std::to_string(c.valu_scalar));
      add(std::to_string(c.valu_packed));
      add(std::to_string(c.shared_read));
      add(std::to_string(c.shared_write));
      add(std::to_string(c.barriers));
    };
    counters(cell.measured);
    counters(cell.predicted);
    add(cell.counters_match ? "1" : "0");
    add(fmt_sci6(cell.max_abs_err));
    add(cell.bit_exact_canonical ? "1" : "0");
    add(fmt_fixed4(cell.cost));
    add(fmt_fixed4(cell.atomic_reduction_pct));
    add(fmt_fixed4(cell.load_reduction_pct));
    add(fmt_fixed4(cell.valu_reduction_pct));
    add(fmt_fixed4(cell.cost_reduction_pct));
    out += line;
    out += '\n';
  }
  return out;
}

namespace {

json counters_to_json(const sim::CounterSet& c) {
  return json{{"global_atomic", c.global_atomic},
              {"global_load_16", c.global_load_16},
              {"global_load_32", c.global_load_32},
              {"valu_scalar", c.valu_scalar},
              {"valu_packed", c.valu_packed},
              {"shared_read", c.shared_read},
              {"shared_write", c.shared_write},
              {"barriers", c.barriers}};
}

sim::CounterSet counters_from_json(const json& j) {
  sim::CounterSet c;
  c.global_atomic = j.at("global_atomic");
  c.global_load_16 = j.at("global_load_16");
  c.global_load_32 = j.at("global_load_32");
  c.valu_scalar = j.at("valu_scalar");
  c.valu_packed = j.at("valu_packed");
  c.shared_read = j.at("shared_read");
  c.shared_write = j.at("shared_write");
  c.barriers = j.at("barriers");
  return c;
}

}  // namespace

json report_to_json(const BenchReport& report) {
  json j;
  j["config"] = config_to_json(report.config);
  // The cost proxy is counter bookkeeping only; it is not comparable to
  // hardware throughput or latency percentages.
  j["note"] =
      "reduction percentages are exact counter reductions from the "
      "simulator; they are not hardware throughput/latency figures";
  j["cells"] = json::array();
  for (const auto& cell : report.cells) {
    json c;
    c["shape_id"] = cell.shape_id;
    c["shape"] = {{"m", cell.shape.m},
                  {"k", cell.shape.k},
                  {"n", cell.shape.n},
                  {"g", cell.shape.g}};
    c["variant"] = {{"smb", cell.flags.smb},
                    {"vml", cell.flags.vml},
                    {"ila", cell.flags.ila}};
    c["perm_mode"] = std::string(to_string(cell.perm_mode));
    c["measured"] = counters_to_json(cell.measured);
    c["predicted"] = counters_to_json(cell.predicted);
    c["counters_match"] = cell.counters_match;
    c["max_abs_err"] = cell.max_abs_err;
    c["bit_exact_canonical"] = cell.bit_exact_canonical;
    c["cost"] = cell.cost;
    c["atomic_reduction_pct"] = cell.atomic_reduction_pct;
    c["load_reduction_pct"] = cell.load_reduction_pct;
    c["valu_reduction_pct"] = cell.valu_reduction_pct;
    c["cost_reduction_pct"] = cell.cost_reduction_pct;
    j["cells"].push_back(std::move(c));
  }
  j["all_counters_match"] = report.all_counters_match;
  j["all_bit_exact"] = report.all_bit_exact;
  j["worst_abs_err"] = report.worst_abs_err;
  j["within_tolerance"] = report.within_tolerance;
  return j;
}

BenchReport report_from_json(const json& j) {
  BenchReport report;
  try {
    report.config = config_from_json(j.at("config"));
    for (const auto& c : j.at("cells")) {
      CellResult cell;
      cell.shape_id = c.at("shape_id");
      cell.shape = ShapeSpec{c.at("shape").at("m"), c.at("shape").at("k"),
                             c.at("shape").at("n"), c.at("shape").at("g")};
      cell.flags =
          kernels::VariantFlags{c.at("variant").at("smb").get<bool>(),
                                c.at("variant").at("vml").get<bool>(),
                                c.at("variant").at("ila").get<bool>()};
      cell.perm_mode =
          perm_mode_from_string(c.at("perm_mode").get<std::string>());
      cell.measured = counters_from_json(c.at("measured"));
      cell.predicted = counters_from_json(c.at("predicted"));
      cell.counters_match = c.at("counters_match");
      cell.max_abs_err = c.at("max_abs_err");
      cell.bit_exact_canonical = c.at("bit_exact_canonical");
      cell.cost = c.at("cost");
      cell.atomic_reduction_pct = c.at("atomic_reduction_pct");
      cell.load_reduction_pct = c.at("load_reduction_pct");
      cell.valu_reduction_pct = c.at("valu_reduction_pct");
      cell.cost_reduction_pct = c.at("cost_reduction_pct");
      report.cells.push_back(std::move(cell));
    }
    report.all_counters_match = j.at("all_counters_match");
    report.all_bit_exact = j.at("all_bit_exact");
    report.worst_abs_err = j.at("worst_abs_err");
    report.within_tolerance = j.at("within_tolerance");
  } catch (const json::exception& e) {
    throw FormatError(std::string("bad report: ") + e.what());
  }
  return report;
}

std::uint64_t fnv1a64(const void* data, std::size_t size) {
  const auto* p = static_cast<const unsigned char*>(data);
  std::uint64_t h = 0xCBF29CE484222325ull;
  for (std::size_t i = 0; i < size; ++i) {
    h ^= p[i];
    h *= 0x100000001B3ull;
  }
  return h;
}

std::uint64_t fnv1a64(const std::string& s) { return fnv1a64(s.data(), s.size()); }

namespace {

std::string hex16(std::uint64_t v) {
  char buf[24];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

void write_file(const std::string& path, const std::string& contents) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot open for writing: " + path);
  out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
  if (!out) throw FormatError("write failed: " + path);
}

}  // namespace

int cmd_pack(const RunConfig& config, std::ostream& log) {
  std::filesystem::create_directories(config.output_dir);
  log << "seed " << config.seed << "\n";
  for (std::size_t i = 0; i < config.shapes.size(); ++i) {
    const ShapeSpec& shape = config.shapes[i];
    const PermMode mode = perm_mode_for_shape(config, i);
    const auto weights = make_weights(weight_seed(config.seed, i), shape, mode);
    std::ostringstream blob(std::ios::binary);
    gptq::serialize(weights, blob);
    const std::string bytes = blob.str();
    const std::string path =
        (std::filesystem::path(config.output_dir) / weights_file_name(shape, i))
            .string();
    write_file(path, bytes);
    log << "wrote " << path << " perm=" << to_string(mode)
        << " digest=" << hex16(fnv1a64(bytes)) << "\n";
  }
  return 0;
}

int cmd_run(const RunConfig& config, bool strict, std::ostream& log,
            const std::optional<std::string>& weights_dir) {
  const BenchReport report = run_benchmark(config, weights_dir);

  std::filesystem::create_directories(config.output_dir);
  const std::string csv = render_csv(report);
  const std::string report_str = report_to_json(report).dump(2) + "\n";
  const auto dir = std::filesystem::path(config.output_dir);
  write_file((dir / "results.csv").string(), csv);
  write_file((dir / "report.json").string(), report_str);

  log << "seed " << report.config.seed << "\n";
  log << "wrote " << (dir / "results.csv").string()
      << " digest=" << hex16(fnv1a64(csv)) << "\n";
  log << "wrote " << (dir / "report.json").string()
      << " digest=" << hex16(fnv1a64(report_str)) << "\n";

  int failures = 0;
  for (const auto& cell : report.cells) {
    if (!cell.counters_match) {
      log << "error: counter mismatch: shape " << cell.shape_id << " variant "
          << cell.flags.name() << "\n";
      ++failures;
    }
    if (!cell.bit_exact_canonical) {
      log << "error: canonical mismatch: shape " << cell.shape_id
          << " variant " << cell.flags.name() << "\n";
      ++failures;
    }
    if (cell.max_abs_err > config.tolerance) {
      log << "error: tolerance exceeded: shape " << cell.shape_id
          << " variant " << cell.flags.name() << " err "
          << fmt_sci6(cell.max_abs_err) << " > " << fmt_sci6(config.tolerance)
          << "\n";
      ++failures;
    } else if (strict && cell.max_abs_err > config.tolerance / 2) {
      log << "error: strict: error within 2x of tolerance: shape "
          << cell.shape_id << " variant " << cell.flags.name() << " err "
          << fmt_sci6(cell.max_abs_err) << "\n";
      ++failures;
    }
  }
  log << (failures == 0 ? "run OK" : "run FAILED") << ": "
      << report.cells.size() << " cells, worst |err| "
      << fmt_sci6(report.worst_abs_err) << "\n";
  return failures == 0 ? 0 : 1;
}

int cmd_verify(const RunConfig& config,
               std::optional<double> tolerance_override, bool strict,
               std::ostream& log) {
  int failed = 0;
  const auto check = [&](bool ok, const std::string& what) {
    log << (ok ? "[PASS] " : "[FAIL] ") << what << "\n";
    if (!ok) ++failed;
  };

  // Arithmetic spot vectors and exhaustive structural properties.
  {
    bool ok = f32_to_f16(1.0f).bits() == 0x3C00 &&
              f32_to_f16(65520.0f).bits() == kPositiveInf16 &&
              f32_to_f16(-0.0f).bits() == 0x8000 &&
              h_add(f32_to_f16(2048.0f), f32_to_f16(1.0f)).bits() == 0x6800 &&
              h_add(Half::from_bits(kPositiveInf16),
                    Half::from_bits(kNegativeInf16))
                      .bits() == kCanonicalNaN16 &&
              h_fma(f32_to_f16(3.0f), f32_to_f16(3.0f), f32_to_f16(1.0f))
                      .bits() == f32_to_f16(10.0f).bits();
    std::uint32_t bad_roundtrip = 0;
    for (std::uint32_t bits = 0; bits < 0x10000; ++bits) {
      const Half h = Half::from_bits(static_cast<std::uint16_t>(bits));
      const Half back = f32_to_f16(f16_to_f32(h));
      const std::uint16_t want = h.is_nan() ? kCanonicalNaN16 : h.bits();
      if (back.bits() != want) ++bad_roundtrip;
      const Half2 packed = halves2half2(h, Half::from_bits(static_cast<std::uint16_t>(~bits)));
      if (low2half(packed) != h || Half2::from_bits(packed.bits()) != packed)
        ++bad_roundtrip;
    }
    check(ok && bad_roundtrip == 0, "f16 arithmetic vectors and roundtrips");
  }

  // Container pack/unpack and file roundtrips.
  {
    bool ok = true;
    SplitMix64 rng(config.seed);
    for (int iter = 0; iter < 20 && ok; ++iter) {
      ShapeSpec shape;
      shape.k = 8 * (1 + static_cast<std::uint32_t>(rng.next() % 8));
      shape.n = 8 * (1 + static_cast<std::uint32_t>(rng.next() % 4));
      shape.g = (iter % 3 == 0) ? shape.k : 8;
      shape.m = 1;
      const auto mode = static_cast<PermMode>(iter % 4);
      const auto w = make_weights(rng.next(), shape, mode);
      ok = ok && (gptq::pack(gptq::unpack(w)) == w);
      std::ostringstream blob(std::ios::binary);
      gptq::serialize(w, blob);
      std::istringstream in(blob.str(), std::ios::binary);
      ok = ok && (gptq::deserialize(in) == w);
    }
    check(ok, "pack/unpack and serialize/deserialize roundtrips");
  }

  // Full matrix: counters, canonical bit-exactness, oracle tolerance.
  const BenchReport report = run_benchmark(config);
  check(report.all_counters_match, "simulator counters equal predictions");
  check(report.all_bit_exact, "kernels bit-exact vs canonical accumulation");
  const double tol =
      tolerance_override ? *tolerance_override : config.tolerance;
  check(report.worst_abs_err <= tol,
        "f32-oracle error within tolerance (worst " +
            fmt_sci6(report.worst_abs_err) + ", bound " + fmt_sci6(tol) + ")");
  if (strict && report.worst_abs_err > tol / 2)
    check(false, "strict: worst error within 2x of tolerance");

  // Store-stage reordering: smb output differs from baseline only within
  // the documented fp16 reordering bound (and is NOT bit-equal in general).
  {
    double worst = 0.0;
    for (std::size_t i = 0; i < config.shapes.size(); ++i) {
      const auto data = build_shape_data(config, i);
      sim::DeviceContext dev_base, dev_smb;
      const auto base = kernels::gemm_half_q_half(
          data->problem, config.tile, kernels::VariantFlags{false, false, false},
          dev_base);
      const auto smb = kernels::gemm_half_q_half(
          data->problem, config.tile, kernels::VariantFlags{true, false, false},
          dev_smb);
      for (std::size_t e = 0; e < base.c.data().size(); ++e)
        worst = std::max(worst,
                         std::abs(static_cast<double>(f16_to_f32(base.c.data()[e])) -
                                  static_cast<double>(f16_to_f32(smb.c.data()[e]))));
    }
    check(worst <= tol, "smb-vs-baseline reordering delta within tolerance (" +
                            fmt_sci6(worst) + " vs " + fmt_sci6(tol) + ")");
  }

  log << (failed == 0 ? "verify OK" : "verify FAILED") << "\n";
  return failed == 0 ? 0 : 1;
}

int cmd_report(const std::string& report_path, const std::string& out_dir,
               std::ostream& log) {
  std::ifstream in(report_path);
  if (!in) throw FormatError("cannot open report: " + report_path);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw FormatError(std::string("report is not valid JSON: ") + e.what());
  }
  const BenchReport report = report_from_json(j);
  const std::string csv = render_csv(report);
  std::filesystem::create_directories(out_dir);
  const std::string path =
      (std::filesystem::path(out_dir) / "results.csv").string();
  write_file(path, csv);
  log << "wrote " << path << " digest=" << hex16(fnv1a64(csv)) << "\n";
  return 0;
}

}  // namespace qgemm::bench
