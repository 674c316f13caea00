#include "relsim/cli.hpp"

#include <omp.h>

#include <CLI11.hpp>
#include <cmath>
#include <filesystem>
#include <iomanip>
#include <json.hpp>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "relsim/abft.hpp"
#include "relsim/dta.hpp"
#include "relsim/gemm.hpp"
#include "relsim/inject.hpp"
#include "relsim/io.hpp"
#include "relsim/json_util.hpp"
#include "relsim/readopt.hpp"
#include "relsim/timing_env.hpp"
#include "relsim/workloads.hpp"

namespace relsim::cli {

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

struct Common {
  std::string config;
  std::string out = "out";
  std::optional<std::uint64_t> seed;
  int threads = 0;
  std::string format = "csv";
};

struct RunContext {
  Common common;
  std::string subcommand;
  fs::path out_dir;
  fs::path config_dir;
  std::vector<std::string> outputs;

  void write(const std::string& name, const std::string& contents) {
    const auto path = out_dir / name;
    write_file_atomic(path, contents);
    outputs.push_back(path.string());
  }
  bool as_json() const { return common.format == "json"; }
};

std::string num(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  std::ostringstream os;
  os << std::setprecision(10) << v;
  return os.str();
}

fs::path resolve(const fs::path& base, const std::string& p) {
  fs::path q(p);
  return (q.is_absolute() ? q : fs::absolute(base / q)).lexically_normal();
}

json load_config(RunContext& ctx) {
  if (ctx.common.config.empty()) {
    ctx.config_dir = fs::current_path();
    return json::object();
  }
  const fs::path path = fs::absolute(ctx.common.config);
  ctx.config_dir = path.parent_path();
  json j;
  try {
    j = json::parse(read_text_file(path));
  } catch (const json::parse_error& e) {
    throw ConfigError("<root>", std::string("malformed JSON (") + e.what() + ")");
  }
  if (!j.is_object()) throw ConfigError("<root>", "expected a JSON object");
  if (j.contains("subcommand")) {
    if (j["subcommand"] != ctx.subcommand)
      throw ConfigError("subcommand", "config was written for '" + j["subcommand"].dump() + "'");
    j.erase("subcommand");
  }
  return j;
}

std::uint64_t resolve_seed(ObjectReader& r, const RunContext& ctx, std::uint64_t fallback) {
  const auto from_config = r.get_or<std::uint64_t>("seed", fallback);
  return ctx.common.seed.value_or(from_config);
}

template <typename F>
auto field(const std::string& name, F fn) {
  try {
    return fn();
  } catch (const ConfigError&) {
    throw;
  } catch (const IoError&) {
    throw;
  } catch (const std::invalid_argument& e) {
    throw ConfigError(name, e.what());
  }
}

// Workload lists: an inline array of {name, weights, acts} or the path of a
// suite manifest {"workloads": [...]} whose paths are relative to it.
struct WorkloadRef {
  std::string name;
  fs::path weights, acts;
};

std::vector<WorkloadRef> parse_refs(const json& j, const fs::path& base, const std::string& path) {
  if (j.is_string()) {
    const fs::path manifest = resolve(base, j.get<std::string>());
    json m;
    try {
      m = json::parse(read_text_file(manifest));
    } catch (const json::parse_error& e) {
      throw IoError(std::string("malformed suite manifest (") + e.what() + ")", manifest);
    }
    if (!m.is_object() || !m.contains("workloads")) throw IoError("suite manifest lacks 'workloads'", manifest, "workloads");
    return parse_refs(m["workloads"], manifest.parent_path(), path);
  }
  if (!j.is_array()) throw ConfigError(path, "expected an array of workloads or a suite manifest path");
  std::vector<WorkloadRef> refs;
  for (std::size_t i = 0; i < j.size(); ++i) {
    ObjectReader r(j[i], path + "[" + std::to_string(i) + "]");
    WorkloadRef ref;
    ref.name = r.get<std::string>("name");
    ref.weights = resolve(base, r.get<std::string>("weights"));
    ref.acts = resolve(base, r.get<std::string>("acts"));
    r.finish();
    refs.push_back(ref);
  }
  return refs;
}

json refs_to_json(const std::vector<WorkloadRef>& refs) {
  json a = json::array();
  for (const auto& r : refs) a.push_back({{"name", r.name}, {"weights", r.weights.string()}, {"acts", r.acts.string()}});
  return a;
}

DtaWorkload load_workload(const WorkloadRef& ref) {
  return DtaWorkload{ref.name, load_tensor(ref.weights), load_tensor(ref.acts)};
}

void write_run_json(RunContext& ctx, json resolved) {
  resolved["subcommand"] = ctx.subcommand;
  ctx.write("run.json", resolved.dump(2) + "\n");
}

// ---------------------------------------------------------------- dta

void cmd_dta(RunContext& ctx) {
  const json cfg = load_config(ctx);
  ObjectReader r(cfg, "");
  const std::uint64_t seed = resolve_seed(r, ctx, 11);
  TimingEnv env = r.has("env") ? timing_env_from_json(r.raw("env"), "env") : default_dta_env();
  env.variation.seed = seed;
  std::optional<std::vector<WorkloadRef>> refs;
  if (r.has("workloads")) refs = parse_refs(r.raw("workloads"), ctx.config_dir, "workloads");
  std::vector<FmaxMethod> methods{FmaxMethod::sta, FmaxMethod::corner, FmaxMethod::avatar};
  if (r.has("methods")) {
    methods.clear();
    for (const auto& m : r.get<std::vector<std::string>>("methods"))
      methods.push_back(field("methods", [&] { return fmax_method_from_string(m); }));
    if (methods.empty()) throw ConfigError("methods", "empty method list");
  }
  r.finish();

  std::vector<DtaWorkload> workloads;
  if (refs)
    for (const auto& ref : *refs) workloads.push_back(load_workload(ref));
  else
    workloads = make_dta_suite(seed);

  std::vector<FmaxResult> rows;
  for (const auto& w : workloads)
    for (auto m : methods) rows.push_back(fmax_search(w, m, env));

  if (ctx.as_json()) {
    json a = json::array();
    for (const auto& row : rows)
      a.push_back({{"workload", row.workload},
                   {"method", to_string(row.method)},
                   {"period_ns", row.period_ns},
                   {"fmax_MHz", row.fmax_mhz},
                   {"sta_fmax_MHz", row.sta_fmax_mhz},
                   {"improvement_pct", row.improvement_vs_sta * 100.0},
                   {"search_iterations", row.search_iterations}});
    ctx.write("fmax.json", a.dump(2) + "\n");
  } else {
    ctx.write("fmax.csv", fmax_table_csv(rows));
  }

  json resolved = {{"seed", seed}, {"env", to_json(env)}};
  if (refs) resolved["workloads"] = refs_to_json(*refs);
  json ms = json::array();
  for (auto m : methods) ms.push_back(to_string(m));
  resolved["methods"] = ms;
  write_run_json(ctx, resolved);
}

// ---------------------------------------------------------------- read

struct LayerRow {
  std::string name;
  std::size_t c_out = 0, c_in = 0;
  TerReport base, direct, best;
  Reduction direct_red, best_red;
  std::size_t best_k = 0;
  std::vector<std::pair<std::size_t, TerReport>> per_k;
  std::vector<Reduction> per_k_red;
};

double geomean(const std::vector<Reduction>& v) {
  double s = 0.0;
  for (const auto& r : v) {
    if (r.no_errors) return std::numeric_limits<double>::infinity();
    s += std::log(r.value);
  }
  return v.empty() ? 1.0 : std::exp(s / double(v.size()));
}

void cmd_read(RunContext& ctx) {
  const json cfg = load_config(ctx);
  ObjectReader r(cfg, "");
  const std::uint64_t seed = resolve_seed(r, ctx, 1);
  TimingEnv env = r.has("env") ? timing_env_from_json(r.raw("env"), "env") : default_read_env();
  env.variation.seed = seed;
  std::optional<std::vector<WorkloadRef>> refs;
  if (r.has("layers")) refs = parse_refs(r.raw("layers"), ctx.config_dir, "layers");
  auto ks = r.get_or<std::vector<std::size_t>>("k", {2, 4, 8});
  if (ks.empty()) throw ConfigError("k", "empty k sweep");
  for (auto k : ks)
    if (k == 0) throw ConfigError("k", "cluster counts must be positive");
  ClusterOptions copts;
  if (r.has("cluster")) {
    ObjectReader c(r.raw("cluster"), "cluster");
    copts.max_iters = c.get_or("max_iters", copts.max_iters);
    copts.restarts = c.get_or("restarts", copts.restarts);
    c.finish();
    if (copts.max_iters < 1 || copts.restarts < 1) throw ConfigError("cluster", "max_iters and restarts must be >= 1");
  }
  copts.seed = seed;
  const bool write_plans = r.get_or("write_plans", true);
  r.finish();

  std::vector<Layer> layers;
  if (refs)
    for (const auto& ref : *refs) {
      auto w = load_workload(ref);
      layers.push_back(Layer{w.name, std::move(w.weights), std::move(w.acts)});
    }
  else
    layers = make_layer_suite(seed);

  std::vector<LayerRow> rows;
  for (const auto& layer : layers) {
    LayerRow row;
    row.name = layer.name;
    row.c_out = layer.weights.rows();
    row.c_in = layer.weights.cols();
    const auto direct_plan = direct_reorder_plan(layer.weights);
    const auto cmp = evaluate_ter_reduction(layer.weights, layer.acts, direct_plan, env);
    row.base = cmp.baseline;
    row.direct = cmp.optimized;
    row.direct_red = cmp.ter_reduction;
    if (write_plans) ctx.write("plans/" + layer.name + ".direct.json", to_json(direct_plan).dump() + "\n");
    std::optional<ReorderPlan> best_plan;
    for (auto k : ks) {
      const std::size_t kk = std::min(k, row.c_out);
      const auto plan = cluster_then_reorder(layer.weights, kk, copts);
      auto rep = run_tile_rows(layer.weights, layer.acts, env, plan.row_orders(row.c_out)).report;
      const auto red = reduction_ratio(row.base.ter(), rep.ter());
      const bool better = !best_plan || (red.no_errors && !row.best_red.no_errors) ||
                          (!row.best_red.no_errors && !red.no_errors && red.value > row.best_red.value);
      if (better) {
        best_plan = plan;
        row.best = rep;
        row.best_red = red;
        row.best_k = kk;
      }
      row.per_k.emplace_back(k, rep);
      row.per_k_red.push_back(red);
    }
    if (write_plans)
      ctx.write("plans/" + layer.name + ".k" + std::to_string(row.best_k) + ".json", to_json(*best_plan).dump() + "\n");
    rows.push_back(std::move(row));
  }

  std::vector<Reduction> dr, br;
  std::vector<std::vector<Reduction>> kr(ks.size());
  for (const auto& row : rows) {
    dr.push_back(row.direct_red);
    br.push_back(row.best_red);
    for (std::size_t i = 0; i < ks.size(); ++i) kr[i].push_back(row.per_k_red[i]);
  }

  if (ctx.as_json()) {
    json a = json::array();
    for (const auto& row : rows) {
      json per_k = json::array();
      for (std::size_t i = 0; i < ks.size(); ++i)
        per_k.push_back({{"k", ks[i]}, {"ter", row.per_k[i].second.ter()}, {"reduction", row.per_k_red[i].to_string()}});
      a.push_back({{"layer", row.name},
                   {"c_out", row.c_out},
                   {"c_in", row.c_in},
                   {"baseline", to_json(row.base)},
                   {"direct", to_json(row.direct)},
                   {"direct_reduction", row.direct_red.to_string()},
                   {"best_k", row.best_k},
                   {"cluster_then_reorder", to_json(row.best)},
                   {"cluster_then_reorder_reduction", row.best_red.to_string()},
                   {"per_k", per_k}});
    }
    json summary = {{"direct_geomean_reduction", num(geomean(dr))}, {"cluster_then_reorder_geomean_reduction", num(geomean(br))}};
    ctx.write("read.json", json({{"layers", a}, {"summary", summary}}).dump(2) + "\n");
  } else {
    std::ostringstream os;
    os << "layer,c_out,c_in,baseline_ter,baseline_flip_rate,direct_ter,direct_flip_rate,direct_reduction,best_k,"
          "ctr_ter,ctr_flip_rate,ctr_reduction";
    for (auto k : ks) os << ",k" << k << "_ter,k" << k << "_reduction";
    os << '\n';
    for (const auto& row : rows) {
      os << row.name << ',' << row.c_out << ',' << row.c_in << ',' << num(row.base.ter()) << ','
         << num(row.base.flip_rate()) << ',' << num(row.direct.ter()) << ',' << num(row.direct.flip_rate()) << ','
         << row.direct_red.to_string() << ',' << row.best_k << ',' << num(row.best.ter()) << ','
         << num(row.best.flip_rate()) << ',' << row.best_red.to_string();
      for (std::size_t i = 0; i < ks.size(); ++i)
        os << ',' << num(row.per_k[i].second.ter()) << ',' << row.per_k_red[i].to_string();
      os << '\n';
    }
    os << "geomean,,,,,,," << num(geomean(dr)) << ",,,," << num(geomean(br));
    for (std::size_t i = 0; i < ks.size(); ++i) os << ",," << num(geomean(kr[i]));
    os << '\n';
    ctx.write("read.csv", os.str());
  }

  json resolved = {{"seed", seed},
                   {"env", to_json(env)},
                   {"k", ks},
                   {"cluster", {{"max_iters", copts.max_iters}, {"restarts", copts.restarts}}},
                   {"write_plans", write_plans}};
  if (refs) resolved["layers"] = refs_to_json(*refs);
  write_run_json(ctx, resolved);
}

// ---------------------------------------------------------------- abft

void cmd_abft(RunContext& ctx) {
  const json cfg = load_config(ctx);
  ObjectReader r(cfg, "");
  const std::uint64_t seed = resolve_seed(r, ctx, 17);

  json resolved = {{"seed", seed}};
  DtaWorkload work;
  {
    const json wj = r.has("workload") ? r.raw("workload") : json{{"m", 128}, {"n", 64}, {"k", 128}};
    ObjectReader w(wj, "workload");
    if (w.has("weights")) {
      WorkloadRef ref{w.get_or<std::string>("name", "gemm"), resolve(ctx.config_dir, w.get<std::string>("weights")),
                      resolve(ctx.config_dir, w.get<std::string>("acts"))};
      w.finish();
      work = load_workload(ref);
      resolved["workload"] = {{"name", ref.name}, {"weights", ref.weights.string()}, {"acts", ref.acts.string()}};
    } else {
      const auto m = w.get<std::size_t>("m"), n = w.get<std::size_t>("n"), k = w.get<std::size_t>("k");
      w.finish();
      work = field("workload", [&] { return make_gemm_workload("gemm", m, n, k, seed); });
      resolved["workload"] = {{"m", m}, {"n", n}, {"k", k}};
    }
  }
  ChecksumPlan plan;
  if (r.has("plan")) {
    ObjectReader p(r.raw("plan"), "plan");
    plan.dataflow = field("plan.dataflow", [&] { return dataflow_from_string(p.get_or<std::string>("dataflow", "ws")); });
    plan.rows = p.get_or("rows", plan.rows);
    plan.cols = p.get_or("cols", plan.cols);
    plan.depth = p.get_or("depth", plan.depth);
    p.finish();
    field("plan", [&] {
      plan.validate();
      return 0;
    });
  }
  resolved["plan"] = {{"dataflow", to_string(plan.dataflow)}, {"rows", plan.rows}, {"cols", plan.cols}, {"depth", plan.depth}};
  const double headroom = r.get_or("headroom", 2.0);
  if (!(headroom >= 1.0)) throw ConfigError("headroom", "must be >= 1");
  std::optional<double> out_scale_cfg;
  if (r.has("out_scale")) {
    out_scale_cfg = r.get<double>("out_scale");
    if (!(*out_scale_cfg > 0.0)) throw ConfigError("out_scale", "must be positive");
  }
  const int max_rounds = r.get_or("max_rounds", 3);
  if (max_rounds < 0) throw ConfigError("max_rounds", "must be >= 0");

  const auto exact = gemm_wide(work.weights, work.acts);
  double out_scale = 0.0;
  if (out_scale_cfg) {
    out_scale = *out_scale_cfg;
  } else {
    std::int64_t mx = 1;
    for (auto v : exact.data()) mx = std::max<std::int64_t>(mx, std::llabs(v));
    out_scale = headroom * double(mx) * exact.scale() / 127.0;
  }
  resolved["headroom"] = headroom;
  if (out_scale_cfg) resolved["out_scale"] = *out_scale_cfg;
  resolved["max_rounds"] = max_rounds;

  CriticalRegion region;
  if (r.has("region")) {
    const auto path = resolve(ctx.config_dir, r.get<std::string>("region"));
    json rj;
    try {
      rj = json::parse(read_text_file(path));
    } catch (const json::parse_error& e) {
      throw IoError(std::string("malformed region file (") + e.what() + ")", path);
    }
    region = field("region", [&] { return critical_region_from_json(rj); });
    resolved["region"] = path.string();
    if (r.has("calibration")) throw ConfigError("calibration", "give either region or calibration, not both");
  } else {
    std::vector<double> freqs{0.0625, 0.25, 0.5, 1.0}, mags{1, 4, 16, 64, 127};
    double threshold = 0.05;
    if (r.has("calibration")) {
      ObjectReader c(r.raw("calibration"), "calibration");
      freqs = c.get_or("freqs", freqs);
      mags = c.get_or("mags", mags);
      threshold = c.get_or("threshold", threshold);
      c.finish();
    }
    region = field("calibration", [&] {
      return calibrate_region(
          freqs, mags,
          [&](double f, double m) {
            return column_error_gemm_degradation(work.weights, work.acts, plan, out_scale, f, m, mix_seed(seed, 1));
          },
          threshold);
    });
    resolved["calibration"] = {{"freqs", freqs}, {"mags", mags}, {"threshold", threshold}};
  }

  FaultModel faults;
  json fres = {{"kind", "none"}};
  if (r.has("faults")) {
    ObjectReader f(r.raw("faults"), "faults");
    const auto kind = f.get_or<std::string>("kind", "none");
    const bool persistent = f.get_or("persistent", false);
    const double unit = out_scale / exact.scale();
    if (kind == "soup") {
      FaultSoup soup;
      soup.supra_share = f.get_or("supra_share", soup.supra_share);
      soup.sub_scale = f.get_or("sub_scale", soup.sub_scale);
      soup.supra_scale = f.get_or("supra_scale", soup.supra_scale);
      soup.freqs = f.get_or("freqs", soup.freqs);
      soup.seed = mix_seed(seed, 2);
      faults = field("faults", [&] { return fault_soup_model(soup, region, unit); });
      fres = {{"kind", kind},
              {"supra_share", soup.supra_share},
              {"sub_scale", soup.sub_scale},
              {"supra_scale", soup.supra_scale},
              {"freqs", soup.freqs}};
    } else if (kind == "column") {
      const double freq = f.get<double>("freq");
      const double mag = f.get<double>("mag");
      if (!(mag >= 0.0)) throw ConfigError("faults.mag", "must be >= 0");
      faults = field("faults.freq", [&] { return column_fault_model(freq, std::llround(mag * unit), mix_seed(seed, 2)); });
      fres = {{"kind", kind}, {"freq", freq}, {"mag", mag}};
    } else if (kind != "none") {
      throw ConfigError("faults.kind", "unknown fault kind '" + kind + "' (expected none, soup or column)");
    }
    f.finish();
    faults.persistent = persistent;
    fres["persistent"] = persistent;
  }
  resolved["faults"] = fres;
  r.finish();

  ctx.write("region.json", to_json(region).dump(2) + "\n");
  ProtectedResult res;
  try {
    res = protected_gemm(work.weights, work.acts, plan, region, faults, {out_scale, max_rounds, true});
  } catch (const UnrecoverableFault& e) {
    TileAudit a;
    a.tile_id = e.tile_id();
    a.stats = e.stats();
    a.decision = Decision::recompute;
    a.recompute_count = max_rounds;
    ctx.write("audit.jsonl", to_json(a).dump() + "\n");
    write_run_json(ctx, resolved);
    throw;
  }
  ctx.write("audit.jsonl", audit_to_jsonl(res.audit));
  save_tensor(ctx.out_dir / "output.json", res.output, "output");
  ctx.outputs.push_back((ctx.out_dir / "output.json").string());

  std::size_t faulty = 0, missed = 0;
  for (const auto& a : res.audit) {
    const bool detected = a.stats.freq > 0.0 || a.stats.checksum_fault;
    faulty += detected;
    missed += detected && a.recompute_count == 0;
  }
  const double tiles = double(res.audit.size());
  const double degradation = relative_l2(requantize(exact, out_scale), res.output);
  json summary = {{"tiles", res.audit.size()},
                  {"tiles_with_errors", faulty},
                  {"recompute_rate", res.recompute_rate()},
                  {"classical_recompute_rate", tiles ? double(faulty) / tiles : 0.0},
                  {"missed_error_rate", faulty ? double(missed) / double(faulty) : 0.0},
                  {"recompute_rounds", res.recompute_count},
                  {"degradation", degradation},
                  {"threshold", std::isfinite(region.threshold) ? json(region.threshold) : json("inf")},
                  {"out_scale", out_scale}};
  if (ctx.as_json()) {
    ctx.write("summary.json", summary.dump(2) + "\n");
  } else {
    std::ostringstream os;
    os << "metric,value\n";
    for (auto it = summary.begin(); it != summary.end(); ++it)
      os << it.key() << ',' << (it->is_number() ? num(it->get<double>()) : it->get<std::string>()) << '\n';
    ctx.write("summary.csv", os.str());
  }
  write_run_json(ctx, resolved);
}

// ---------------------------------------------------------------- inject

void cmd_inject(RunContext& ctx) {
  const json cfg = load_config(ctx);
  ObjectReader r(cfg, "");
  const std::uint64_t seed = resolve_seed(r, ctx, 1);
  ToyNetworkConfig ncfg = r.has("network") ? toy_network_config_from_json(r.raw("network"), "network") : ToyNetworkConfig{};
  ncfg.seed = seed;
  std::vector<InjectionSpec> sweep;
  if (r.has("sweep")) {
    const auto& s = r.raw("sweep");
    if (!s.is_array()) throw ConfigError("sweep", "expected an array of injection specs");
    for (std::size_t i = 0; i < s.size(); ++i)
      sweep.push_back(injection_spec_from_json(s[i], "sweep[" + std::to_string(i) + "]"));
  }
  const bool standard = r.get_or("standard_slices", !r.has("sweep"));
  r.finish();

  const ToyNetwork net(ncfg);
  std::vector<InjectionSpec> specs = sweep;
  if (standard) {
    const auto extra = standard_sweep(net, seed);
    specs.insert(specs.end(), extra.begin(), extra.end());
  }
  const auto report = field("sweep", [&] { return run_characterization(net, specs); });

  if (ctx.as_json()) {
    json a = json::array();
    for (const auto& rec : report.records)
      a.push_back({{"spec", to_json(rec.spec)},
                   {"relative_l2", rec.result.relative_l2},
                   {"accuracy_delta", rec.result.accuracy_delta}});
    ctx.write("resilience.json", a.dump(2) + "\n");
  } else {
    ctx.write("resilience.csv", resilience_to_csv(report));
  }

  json sj = json::array();
  for (const auto& s : sweep) sj.push_back(to_json(s));
  write_run_json(ctx, {{"seed", seed}, {"network", to_json(ncfg)}, {"sweep", sj}, {"standard_slices", standard}});
}

// ---------------------------------------------------------------- gen-workload

void cmd_gen(RunContext& ctx) {
  const json cfg = load_config(ctx);
  ObjectReader r(cfg, "");
  const std::uint64_t seed = resolve_seed(r, ctx, 1);
  const auto kind = r.get_or<std::string>("kind", "layers");
  json resolved = {{"seed", seed}, {"kind", kind}};

  std::vector<DtaWorkload> items;
  if (kind == "layers") {
    for (auto& l : make_layer_suite(seed)) items.push_back(DtaWorkload{l.name, std::move(l.weights), std::move(l.acts)});
  } else if (kind == "dta") {
    items = make_dta_suite(seed);
  } else if (kind == "gemm") {
    const json gj = r.has("gemm") ? r.raw("gemm") : json{{"m", 128}, {"n", 64}, {"k", 128}};
    ObjectReader g(gj, "gemm");
    const auto m = g.get<std::size_t>("m"), n = g.get<std::size_t>("n"), k = g.get<std::size_t>("k");
    g.finish();
    items.push_back(field("gemm", [&] { return make_gemm_workload("gemm", m, n, k, seed); }));
    resolved["gemm"] = {{"m", m}, {"n", n}, {"k", k}};
  } else {
    throw ConfigError("kind", "unknown workload kind '" + kind + "' (expected layers, dta or gemm)");
  }
  r.finish();

  json list = json::array();
  for (const auto& w : items) {
    const std::string wname = w.name + ".weights.json", aname = w.name + ".acts.json";
    save_tensor(ctx.out_dir / wname, w.weights, w.name + ".weights");
    save_tensor(ctx.out_dir / aname, w.acts, w.name + ".acts");
    ctx.outputs.push_back((ctx.out_dir / wname).string());
    ctx.outputs.push_back((ctx.out_dir / aname).string());
    list.push_back({{"name", w.name}, {"weights", wname}, {"acts", aname}});
  }
  ctx.write("workloads.json", json({{"workloads", list}}).dump(2) + "\n");
  write_run_json(ctx, resolved);
}

json error_json(const std::string& kind, const std::string& message) {
  return {{"status", "error"}, {"error", kind}, {"message", message}};
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Systolic-array reliability workbench"};
  app.require_subcommand(1);
  Common common;
  RunContext ctx;

  struct Sub {
    const char* name;
    const char* help;
    void (*fn)(RunContext&);
  };
  const Sub subs[] = {
      {"dta", "fmax of each workload under STA, corner-guardband and aging/variation-aware timing", cmd_dta},
      {"read", "timing error rate of baseline, direct and cluster-then-reorder plans per layer", cmd_read},
      {"abft", "checksum-protected GEMM with region-based selective recomputation", cmd_abft},
      {"inject", "error-injection resilience sweep on the toy transformer", cmd_inject},
      {"gen-workload", "write a seeded synthetic workload suite as tensor files", cmd_gen},
  };
  for (const auto& s : subs) {
    auto* sc = app.add_subcommand(s.name, s.help);
    sc->add_option("--config", common.config, "JSON config file");
    sc->add_option("--out", common.out, "output directory")->capture_default_str();
    sc->add_option("--seed", common.seed, "seed overriding the config");
    sc->add_option("--threads", common.threads, "OpenMP threads (0: runtime default)")->check(CLI::NonNegativeNumber);
    sc->add_option("--format", common.format, "table format")->check(CLI::IsMember({"csv", "json"}))->capture_default_str();
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    err << error_json("usage", e.what()).dump() << std::endl;
    return 2;
  }

  const Sub* chosen = nullptr;
  for (const auto& s : subs)
    if (app.got_subcommand(s.name)) chosen = &s;

  ctx.common = common;
  ctx.subcommand = chosen->name;
  if (common.threads > 0) omp_set_num_threads(common.threads);

  try {
    ctx.out_dir = fs::absolute(common.out);
    fs::create_directories(ctx.out_dir);
    chosen->fn(ctx);
  } catch (const ConfigError& e) {
    auto j = error_json("config", e.what());
    j["field"] = e.field();
    err << j.dump() << std::endl;
    return 2;
  } catch (const IoError& e) {
    auto j = error_json("io", e.what());
    j["path"] = e.path().string();
    if (!e.field().empty()) j["field"] = e.field();
    err << j.dump() << std::endl;
    return 3;
  } catch (const UnrecoverableFault& e) {
    auto j = error_json("unrecoverable_fault", e.what());
    j["tile_id"] = e.tile_id();
    j["stats"] = to_json(e.stats());
    j["audit"] = (ctx.out_dir / "audit.jsonl").string();
    err << j.dump() << std::endl;
    return 4;
  } catch (const std::invalid_argument& e) {
    err << error_json("invalid_argument", e.what()).dump() << std::endl;
    return 2;
  } catch (const fs::filesystem_error& e) {
    auto j = error_json("io", e.what());
    j["path"] = e.path1().string();
    err << j.dump() << std::endl;
    return 3;
  } catch (const std::exception& e) {
    err << error_json("internal", e.what()).dump() << std::endl;
    return 1;
  }

  out << json({{"status", "ok"}, {"subcommand", ctx.subcommand}, {"outputs", ctx.outputs}}).dump() << std::endl;
  return 0;
}

}  // namespace relsim::cli
