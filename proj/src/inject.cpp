#include "relsim/inject.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <limits>
#include <sstream>

#include "relsim/gemm.hpp"
#include "relsim/json_util.hpp"

namespace relsim {

std::string to_string(Component c) {
  switch (c) {
    case Component::qkv: return "qkv";
    case Component::o_proj: return "o_proj";
    case Component::up: return "up";
    case Component::down: return "down";
    case Component::other: return "other";
  }
  return "?";
}

std::string to_string(Stage s) { return s == Stage::prefill ? "prefill" : "decode"; }
std::string to_string(InjectMode m) { return m == InjectMode::bit ? "bit" : "value"; }

Component component_from_string(const std::string& s) {
  for (auto c : {Component::qkv, Component::o_proj, Component::up, Component::down, Component::other})
    if (to_string(c) == s) return c;
  throw std::invalid_argument("unknown target '" + s + "' (expected qkv, o_proj, up, down or other)");
}

Stage stage_from_string(const std::string& s) {
  if (s == "prefill") return Stage::prefill;
  if (s == "decode") return Stage::decode;
  throw std::invalid_argument("unknown stage '" + s + "' (expected prefill or decode)");
}

InjectMode inject_mode_from_string(const std::string& s) {
  if (s == "bit") return InjectMode::bit;
  if (s == "value") return InjectMode::value;
  throw std::invalid_argument("unknown injection mode '" + s + "' (expected bit or value)");
}

void InjectionSpec::validate() const {
  if (!(rate >= 0.0 && rate <= 1.0)) throw std::invalid_argument("injection rate must lie in [0, 1]");
  if (mode == InjectMode::bit && (bit_position < 0 || bit_position > 31))
    throw std::invalid_argument("bit_position " + std::to_string(bit_position) + " outside the 32-bit accumulator");
  if (mode == InjectMode::value && !(magnitude >= 0.0 && std::isfinite(magnitude)))
    throw std::invalid_argument("injection magnitude must be finite and >= 0");
}

nlohmann::json to_json(const InjectionSpec& s) {
  nlohmann::json j = {{"target", to_string(s.target)},
                      {"layer", s.layer ? nlohmann::json(*s.layer) : nlohmann::json(nullptr)},
                      {"mode", to_string(s.mode)},
                      {"rate", s.rate},
                      {"stage", to_string(s.stage)},
                      {"seed", s.seed},
                      {"exact_count", s.exact_count}};
  if (s.mode == InjectMode::bit)
    j["bit"] = s.bit_position;
  else
    j["magnitude"] = s.magnitude;
  return j;
}

InjectionSpec injection_spec_from_json(const nlohmann::json& j, const std::string& path) {
  ObjectReader r(j, path);
  InjectionSpec s;
  auto wrap = [&](const std::string& field, auto fn) {
    try {
      return fn();
    } catch (const ConfigError&) {
      throw;
    } catch (const std::invalid_argument& e) {
      throw ConfigError(r.field_path(field), e.what());
    }
  };
  s.target = wrap("target", [&] { return component_from_string(r.get<std::string>("target")); });
  if (r.has("layer") && !r.raw("layer").is_null()) s.layer = r.get<std::size_t>("layer");
  s.mode = wrap("mode", [&] { return inject_mode_from_string(r.get_or<std::string>("mode", "bit")); });
  if (s.mode == InjectMode::bit) {
    s.bit_position = r.get<int>("bit");
    if (r.has("magnitude")) throw ConfigError(r.field_path("magnitude"), "not allowed in bit mode");
  } else {
    s.magnitude = r.get<double>("magnitude");
    if (r.has("bit")) throw ConfigError(r.field_path("bit"), "not allowed in value mode");
  }
  s.rate = r.get<double>("rate");
  s.stage = wrap("stage", [&] { return stage_from_string(r.get_or<std::string>("stage", "prefill")); });
  s.seed = r.get_or<std::uint64_t>("seed", 0);
  s.exact_count = r.get_or("exact_count", false);
  r.finish();
  wrap("rate", [&] {
    s.validate();
    return 0;
  });
  return s;
}

AccTensor inject(const AccTensor& y, const InjectionSpec& spec, double unit) {
  spec.validate();
  AccTensor out = y;
  auto d = out.data();
  const std::size_t n = d.size();
  const std::int64_t delta = std::llround(spec.magnitude * unit);

  auto hit = [&](std::size_t idx, bool negative) {
    if (spec.mode == InjectMode::bit) {
      d[idx] = static_cast<std::int32_t>(static_cast<std::uint32_t>(d[idx]) ^ (1u << spec.bit_position));
    } else {
      const std::int64_t v = std::int64_t{d[idx]} + (negative ? -delta : delta);
      d[idx] = static_cast<std::int32_t>(std::clamp<std::int64_t>(v, std::numeric_limits<std::int32_t>::min(),
                                                                  std::numeric_limits<std::int32_t>::max()));
    }
  };

  if (spec.exact_count) {
    const auto count = std::min<std::size_t>(n, static_cast<std::size_t>(std::llround(spec.rate * double(n))));
    std::vector<std::size_t> idx(n);
    for (std::size_t i = 0; i < n; ++i) idx[i] = i;
    SeededStream rng(spec.seed);
    for (std::size_t i = 0; i < count; ++i) {
      std::swap(idx[i], idx[i + rng.below(n - i)]);
      hit(idx[i], rng.bernoulli(0.5));
    }
    return out;
  }
  for (std::size_t i = 0; i < n; ++i) {
    const double u = double(SeededStream::draw_at(spec.seed, 2 * i) >> 11) * 0x1.0p-53;
    if (u < spec.rate) hit(i, SeededStream::draw_at(spec.seed, 2 * i + 1) & 1);
  }
  return out;
}

void ToyNetworkConfig::validate() const {
  if (!d_model || !d_ff || !layers || !classes || !vocab || !prefill_tokens || !batch)
    throw std::invalid_argument("toy network: sizes must be positive");
  if (!(headroom >= 1.0)) throw std::invalid_argument("toy network: headroom must be >= 1");
  if (outlier_channels > d_model) throw std::invalid_argument("toy network: more outlier channels than d_model");
  if (!(outlier_gain >= 1.0)) throw std::invalid_argument("toy network: outlier_gain must be >= 1");
}

nlohmann::json to_json(const ToyNetworkConfig& c) {
  return {{"d_model", c.d_model}, {"d_ff", c.d_ff},     {"layers", c.layers},
          {"classes", c.classes}, {"vocab", c.vocab},   {"prefill_tokens", c.prefill_tokens},
          {"decode_tokens", c.decode_tokens}, {"batch", c.batch}, {"headroom", c.headroom},
          {"outlier_channels", c.outlier_channels}, {"outlier_gain", c.outlier_gain}, {"seed", c.seed}};
}

ToyNetworkConfig toy_network_config_from_json(const nlohmann::json& j, const std::string& path) {
  ObjectReader r(j, path);
  ToyNetworkConfig c;
  c.d_model = r.get_or("d_model", c.d_model);
  c.d_ff = r.get_or("d_ff", c.d_ff);
  c.layers = r.get_or("layers", c.layers);
  c.classes = r.get_or("classes", c.classes);
  c.vocab = r.get_or("vocab", c.vocab);
  c.prefill_tokens = r.get_or("prefill_tokens", c.prefill_tokens);
  c.decode_tokens = r.get_or("decode_tokens", c.decode_tokens);
  c.batch = r.get_or("batch", c.batch);
  c.headroom = r.get_or("headroom", c.headroom);
  c.outlier_channels = r.get_or("outlier_channels", c.outlier_channels);
  c.outlier_gain = r.get_or("outlier_gain", c.outlier_gain);
  c.seed = r.get_or<std::uint64_t>("seed", c.seed);
  r.finish();
  try {
    c.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(path.empty() ? "<root>" : path, e.what());
  }
  return c;
}

namespace {

// Column-per-token activation matrix.
struct Mat {
  std::size_t rows = 0, cols = 0;
  std::vector<double> v;
  Mat() = default;
  Mat(std::size_t r, std::size_t c) : rows(r), cols(c), v(r * c, 0.0) {}
  double& at(std::size_t r, std::size_t c) { return v[r * cols + c]; }
  double at(std::size_t r, std::size_t c) const { return v[r * cols + c]; }
};

constexpr std::size_t kPerLayer = 4;

std::size_t component_slot(Component c) {
  switch (c) {
    case Component::qkv: return 0;
    case Component::o_proj: return 1;
    case Component::up: return 2;
    case Component::down: return 3;
    case Component::other: return 0;
  }
  return 0;
}

double max_abs(const Mat& m) {
  double a = 0.0;
  for (double x : m.v) a = std::max(a, std::abs(x));
  return a;
}

void rms_scale_columns(Mat& m) {
  for (std::size_t c = 0; c < m.cols; ++c) {
    double ss = 0.0;
    for (std::size_t r = 0; r < m.rows; ++r) ss += m.at(r, c) * m.at(r, c);
    const double inv = 1.0 / std::sqrt(ss / double(m.rows) + 1e-6);
    for (std::size_t r = 0; r < m.rows; ++r) m.at(r, c) *= inv;
  }
}

}  // namespace

struct ToyNetwork::Calibration {
  std::vector<double> in_max, out_max;
};

ToyNetwork::ToyNetwork(ToyNetworkConfig cfg) : cfg_(cfg) {
  cfg_.validate();
  SeededStream rng(mix_seed(cfg_.seed, stable_hash("toy-network")));
  const std::size_t d = cfg_.d_model;

  embedding_.assign(cfg_.vocab, std::vector<double>(d));
  for (auto& e : embedding_)
    for (auto& x : e) x = rng.normal();

  tokens_.assign(cfg_.batch, std::vector<std::size_t>(cfg_.prefill_tokens + cfg_.decode_tokens));
  for (auto& seq : tokens_)
    for (auto& t : seq) t = rng.below(cfg_.vocab);

  std::vector<bool> outlier(d, false);
  for (std::size_t i = 0; i < cfg_.outlier_channels; ++i) {
    std::size_t c;
    do c = rng.below(d);
    while (outlier[c]);
    outlier[c] = true;
  }
  auto make_weights = [&](std::size_t rows, std::size_t cols, bool residual_writer = false) {
    std::vector<double> w(rows * cols);
    for (auto& x : w) x = rng.normal() / std::sqrt(double(cols));
    if (residual_writer)
      for (std::size_t r = 0; r < rows; ++r)
        if (outlier[r])
          for (std::size_t c = 0; c < cols; ++c) w[r * cols + c] *= cfg_.outlier_gain;
    double mx = 0.0;
    for (double x : w) mx = std::max(mx, std::abs(x));
    return quantize(w, {rows, cols}, mx / 127.0);
  };
  for (std::size_t l = 0; l < cfg_.layers; ++l) {
    sites_.push_back({make_weights(3 * d, d)});
    sites_.push_back({make_weights(d, d, true)});
    sites_.push_back({make_weights(cfg_.d_ff, d)});
    sites_.push_back({make_weights(d, cfg_.d_ff, true)});
  }
  sites_.push_back({make_weights(cfg_.classes, d)});

  Calibration calib{std::vector<double>(sites_.size(), 0.0), std::vector<double>(sites_.size(), 0.0)};
  for (std::size_t s = 0; s < cfg_.batch; ++s) run_sequence(s, {}, &calib);
  for (std::size_t i = 0; i < sites_.size(); ++i) {
    sites_[i].in_scale = std::max(calib.in_max[i], 1e-12) / 127.0;
    sites_[i].out_scale = cfg_.headroom * std::max(calib.out_max[i], 1e-12) / 127.0;
  }
  baseline_ = run();
}

const ToyNetwork::Site& ToyNetwork::site(Component c, std::size_t layer) const {
  if (c == Component::other) return sites_.back();
  return sites_[layer * kPerLayer + component_slot(c)];
}

ToyNetwork::Site& ToyNetwork::site(Component c, std::size_t layer) {
  return const_cast<Site&>(static_cast<const ToyNetwork&>(*this).site(c, layer));
}

std::size_t ToyNetwork::gemm_rows(Component c) const { return site(c, 0).w.rows(); }

NetworkOutput::value_type ToyNetwork::run_sequence(std::size_t seq, const GemmHook& hook, Calibration* calib) const {
  const std::size_t d = cfg_.d_model, T = cfg_.prefill_tokens, total = T + cfg_.decode_tokens;
  const auto& toks = tokens_[seq];

  auto gemm = [&](Component comp, std::size_t layer, Stage stage, std::size_t first, const Mat& x) {
    const Site& s = site(comp, layer);
    const std::size_t idx = comp == Component::other ? sites_.size() - 1 : layer * kPerLayer + component_slot(comp);
    Mat out(s.w.rows(), x.cols);
    if (calib) {
      const double mx = max_abs(x);
      calib->in_max[idx] = std::max(calib->in_max[idx], mx);
      const auto xq = quantize(x.v, {x.rows, x.cols}, std::max(mx, 1e-12) / 127.0);
      const auto y = gemm_wide(s.w, xq);
      for (std::size_t i = 0; i < out.v.size(); ++i) out.v[i] = y.data()[i] * y.scale();
      calib->out_max[idx] = std::max(calib->out_max[idx], max_abs(out));
      return out;
    }
    const auto xq = quantize(x.v, {x.rows, x.cols}, s.in_scale);
    auto y = gemm_wide(s.w, xq);
    if (hook) hook(GemmSite{comp, layer, stage, seq, first, s.out_scale}, y);
    const auto q = requantize(y, s.out_scale);
    for (std::size_t i = 0; i < out.v.size(); ++i) out.v[i] = q.data()[i] * q.scale();
    return out;
  };

  auto embed = [&](std::size_t t0, std::size_t n) {
    Mat h(d, n);
    for (std::size_t c = 0; c < n; ++c) {
      const std::size_t t = t0 + c;
      for (std::size_t r = 0; r < d; ++r)
        h.at(r, c) = embedding_[toks[t]][r] + 0.5 * std::sin(double(t + 1) * double(r + 1) * 0.37);
    }
    return h;
  };

  // Per layer KV cache, one column per token.
  std::vector<Mat> kcache(cfg_.layers, Mat(d, total)), vcache(cfg_.layers, Mat(d, total));
  std::vector<double> logits(cfg_.classes * total, 0.0);
  const double inv_sqrt_d = 1.0 / std::sqrt(double(d));

  auto forward = [&](Stage stage, std::size_t t0, std::size_t n) {
    Mat h = embed(t0, n);
    for (std::size_t l = 0; l < cfg_.layers; ++l) {
      Mat a = h;
      rms_scale_columns(a);
      const Mat qkv = gemm(Component::qkv, l, stage, t0, a);
      for (std::size_t c = 0; c < n; ++c)
        for (std::size_t r = 0; r < d; ++r) {
          kcache[l].at(r, t0 + c) = qkv.at(d + r, c);
          vcache[l].at(r, t0 + c) = qkv.at(2 * d + r, c);
        }
      Mat attn(d, n);
      std::vector<double> score;
      for (std::size_t c = 0; c < n; ++c) {
        const std::size_t t = t0 + c;
        score.assign(t + 1, 0.0);
        double mx = -std::numeric_limits<double>::infinity();
        for (std::size_t u = 0; u <= t; ++u) {
          double s = 0.0;
          for (std::size_t r = 0; r < d; ++r) s += qkv.at(r, c) * kcache[l].at(r, u);
          score[u] = s * inv_sqrt_d;
          mx = std::max(mx, score[u]);
        }
        double z = 0.0;
        for (auto& s : score) z += (s = std::exp(s - mx));
        for (std::size_t u = 0; u <= t; ++u)
          for (std::size_t r = 0; r < d; ++r) attn.at(r, c) += score[u] / z * vcache[l].at(r, u);
      }
      const Mat o = gemm(Component::o_proj, l, stage, t0, attn);
      for (std::size_t i = 0; i < h.v.size(); ++i) h.v[i] += o.v[i];
      Mat b = h;
      rms_scale_columns(b);
      Mat u = gemm(Component::up, l, stage, t0, b);
      for (auto& x : u.v) x = std::max(x, 0.0);
      const Mat dn = gemm(Component::down, l, stage, t0, u);
      for (std::size_t i = 0; i < h.v.size(); ++i) h.v[i] += dn.v[i];
    }
    rms_scale_columns(h);
    const Mat y = gemm(Component::other, 0, stage, t0, h);
    for (std::size_t k = 0; k < cfg_.classes; ++k)
      for (std::size_t c = 0; c < n; ++c) logits[k * total + t0 + c] = y.at(k, c);
  };

  forward(Stage::prefill, 0, T);
  for (std::size_t t = T; t < total; ++t) forward(Stage::decode, t, 1);
  return logits;
}

NetworkOutput ToyNetwork::run(const GemmHook& hook, bool parallel) const {
  NetworkOutput out(cfg_.batch);
#pragma omp parallel for schedule(static) if (parallel)
  for (std::ptrdiff_t s = 0; s < static_cast<std::ptrdiff_t>(cfg_.batch); ++s)
    out[static_cast<std::size_t>(s)] = run_sequence(static_cast<std::size_t>(s), hook, nullptr);
  return out;
}

Degradation degradation(const NetworkOutput& clean, const NetworkOutput& faulty, std::size_t classes) {
  if (clean.size() != faulty.size()) throw std::invalid_argument("degradation: batch sizes differ");
  double num = 0.0, den = 0.0;
  std::size_t positions = 0, flipped = 0;
  for (std::size_t s = 0; s < clean.size(); ++s) {
    const auto& a = clean[s];
    const auto& b = faulty[s];
    if (a.size() != b.size() || a.size() % classes) throw std::invalid_argument("degradation: logit shapes differ");
    for (std::size_t i = 0; i < a.size(); ++i) {
      num += (a[i] - b[i]) * (a[i] - b[i]);
      den += a[i] * a[i];
    }
    const std::size_t tokens = a.size() / classes;
    for (std::size_t t = 0; t < tokens; ++t) {
      std::size_t ia = 0, ib = 0;
      for (std::size_t k = 1; k < classes; ++k) {
        if (a[k * tokens + t] > a[ia * tokens + t]) ia = k;
        if (b[k * tokens + t] > b[ib * tokens + t]) ib = k;
      }
      ++positions;
      flipped += ia != ib;
    }
  }
  Degradation d;
  d.relative_l2 = num == 0.0 ? 0.0 : std::sqrt(num / den);
  d.accuracy_delta = positions ? double(flipped) / double(positions) : 0.0;
  return d;
}

namespace {

std::uint64_t call_key(const GemmSite& site) {
  return ((std::uint64_t(site.sequence) * 1024 + site.layer) * 2 + std::uint64_t(site.stage == Stage::decode)) *
             65536 +
         site.first_token;
}

bool matches(const InjectionSpec& spec, const GemmSite& site) {
  return site.component == spec.target && site.stage == spec.stage && (!spec.layer || *spec.layer == site.layer);
}

void check_against(const ToyNetwork& net, const InjectionSpec& spec) {
  spec.validate();
  if (spec.layer) {
    const std::size_t limit = spec.target == Component::other ? 1 : net.config().layers;
    if (*spec.layer >= limit)
      throw std::invalid_argument("injection layer " + std::to_string(*spec.layer) + " does not exist for target " +
                                  to_string(spec.target));
  }
}

}  // namespace

GemmHook injection_hook(const InjectionSpec& spec) {
  spec.validate();
  return [spec](const GemmSite& site, AccTensor& y) {
    if (!matches(spec, site)) return;
    InjectionSpec local = spec;
    local.seed = mix_seed(spec.seed, call_key(site));
    y = inject(y, local, site.out_scale / y.scale());
  };
}

ResilienceReport run_characterization(const ToyNetwork& net, std::span<const InjectionSpec> sweep) {
  for (const auto& s : sweep) check_against(net, s);
  ResilienceReport rep;
  rep.records.resize(sweep.size());
#pragma omp parallel for schedule(dynamic)
  for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(sweep.size()); ++i) {
    const auto& spec = sweep[static_cast<std::size_t>(i)];
    const auto out = net.run(injection_hook(spec), false);
    rep.records[static_cast<std::size_t>(i)] = {spec, degradation(net.baseline(), out, net.config().classes)};
  }
  return rep;
}

std::string resilience_to_csv(const ResilienceReport& report) {
  std::ostringstream os;
  os << std::setprecision(10);
  os << "target,layer,bit,rate,magnitude,stage,metric,value\n";
  for (const auto& r : report.records) {
    const auto& s = r.spec;
    std::ostringstream prefix;
    prefix << std::setprecision(10) << to_string(s.target) << ',' << (s.layer ? std::to_string(*s.layer) : "all")
           << ',';
    if (s.mode == InjectMode::bit) prefix << s.bit_position;
    prefix << ',' << s.rate << ',';
    if (s.mode == InjectMode::value) prefix << s.magnitude;
    prefix << ',' << to_string(s.stage) << ',';
    os << prefix.str() << "relative_l2," << r.result.relative_l2 << '\n';
    os << prefix.str() << "accuracy_delta," << r.result.accuracy_delta << '\n';
  }
  return os.str();
}

std::vector<MsdPoint> msd_grid(const ToyNetwork& net, Component component, Stage stage, double total_mag,
                               std::size_t points, double min_rate) {
  if (points < 3) throw std::invalid_argument("magnitude_frequency_sweep: need at least 3 points");
  if (!(min_rate > 0.0 && min_rate <= 1.0)) throw std::invalid_argument("magnitude_frequency_sweep: min_rate in (0, 1]");
  if (!(total_mag >= 0.0)) throw std::invalid_argument("magnitude_frequency_sweep: total_mag must be >= 0");
  const std::size_t cols = stage == Stage::prefill ? net.config().prefill_tokens : 1;
  const double n = double(net.gemm_rows(component) * cols);
  std::vector<MsdPoint> pts(points);
  for (std::size_t i = 0; i < points; ++i) {
    auto& p = pts[i];
    p.rate = min_rate * std::pow(1.0 / min_rate, double(i) / double(points - 1));
    p.count = static_cast<std::size_t>(std::llround(p.rate * n));
    p.skipped = p.rate * n < 1.0;
    p.magnitude = p.count ? total_mag / double(p.count) : 0.0;
  }
  return pts;
}

namespace {

InjectionSpec msd_spec(Component component, std::optional<std::size_t> layer, Stage stage, const MsdPoint& p,
                       std::uint64_t seed) {
  InjectionSpec spec;
  spec.target = component;
  spec.layer = layer;
  spec.mode = InjectMode::value;
  spec.magnitude = p.magnitude;
  spec.rate = p.rate;
  spec.stage = stage;
  spec.seed = seed;
  spec.exact_count = true;
  return spec;
}

}  // namespace

std::vector<MsdPoint> magnitude_frequency_sweep(const ToyNetwork& net, Component component,
                                                std::optional<std::size_t> layer, Stage stage, double total_mag,
                                                std::size_t points, double min_rate, std::uint64_t seed) {
  auto pts = msd_grid(net, component, stage, total_mag, points, min_rate);
  check_against(net, msd_spec(component, layer, stage, pts.front(), seed));
#pragma omp parallel for schedule(dynamic)
  for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(points); ++i) {
    auto& p = pts[static_cast<std::size_t>(i)];
    if (p.skipped) continue;
    const auto spec = msd_spec(component, layer, stage, p, seed);
    p.result = degradation(net.baseline(), net.run(injection_hook(spec), false), net.config().classes);
  }
  return pts;
}

std::vector<InjectionSpec> standard_sweep(const ToyNetwork& net, std::uint64_t seed) {
  const Component blocks[] = {Component::qkv, Component::o_proj, Component::up, Component::down};
  std::vector<InjectionSpec> out;
  auto value = [&](Component c, std::optional<std::size_t> layer, Stage st, double mag, double rate) {
    InjectionSpec s;
    s.target = c;
    s.layer = layer;
    s.mode = InjectMode::value;
    s.magnitude = mag;
    s.rate = rate;
    s.stage = st;
    s.seed = seed;
    out.push_back(s);
  };
  auto bit = [&](Component c, Stage st, int b, double rate) {
    InjectionSpec s;
    s.target = c;
    s.bit_position = b;
    s.rate = rate;
    s.stage = st;
    s.seed = seed;
    out.push_back(s);
  };
  for (std::size_t l = 0; l < net.config().layers; ++l)
    for (auto c : blocks) value(c, l, Stage::prefill, 40.0, 0.02);
  for (auto c : blocks)
    for (int b = 0; b < 32; ++b) bit(c, Stage::prefill, b, 0.01);
  for (auto st : {Stage::prefill, Stage::decode})
    for (auto c : {Component::qkv, Component::o_proj, Component::up, Component::down, Component::other}) {
      bit(c, st, 24, 0.01);
      value(c, std::nullopt, st, 40.0, 0.02);
    }
  for (auto c : blocks) {
    for (const auto& p : msd_grid(net, c, Stage::prefill, 100.0, 6, 1.0 / 512))
      if (!p.skipped) out.push_back(msd_spec(c, std::nullopt, Stage::prefill, p, seed));
    for (const auto& p : msd_grid(net, c, Stage::decode, 100.0 / 16, 6, 1.0 / 32))
      if (!p.skipped) out.push_back(msd_spec(c, std::nullopt, Stage::decode, p, seed));
  }
  return out;
}

double column_error_degradation(const ToyNetwork& net, Component component, Stage stage, double freq, double mag,
                                std::uint64_t seed) {
  if (!(freq >= 0.0 && freq <= 1.0)) throw std::invalid_argument("column_error_degradation: freq outside [0, 1]");
  GemmHook hook = [=](const GemmSite& site, AccTensor& y) {
    if (site.component != component || site.stage != stage) return;
    SeededStream rng(mix_seed(seed, call_key(site)));
    const std::size_t rows = y.rows(), cols = y.cols();
    // Stochastic rounding keeps the expected share of hit columns at freq.
    const double want = freq * double(cols);
    std::size_t hit = static_cast<std::size_t>(std::floor(want));
    if (rng.uniform() < want - double(hit)) ++hit;
    const std::int64_t delta = std::llround(mag * site.out_scale / y.scale());
    std::vector<std::size_t> idx(cols);
    for (std::size_t j = 0; j < cols; ++j) idx[j] = j;
    for (std::size_t j = 0; j < hit && j < cols; ++j) {
      std::swap(idx[j], idx[j + rng.below(cols - j)]);
      const std::size_t r = rng.below(rows);
      const std::int64_t v = std::int64_t{y.at(r, idx[j])} + (rng.bernoulli(0.5) ? delta : -delta);
      y.at(r, idx[j]) = static_cast<std::int32_t>(std::clamp<std::int64_t>(
          v, std::numeric_limits<std::int32_t>::min(), std::numeric_limits<std::int32_t>::max()));
    }
  };
  return degradation(net.baseline(), net.run(hook), net.config().classes).relative_l2;
}

}  // namespace relsim
