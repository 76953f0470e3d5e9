// Copyright 2026 uadps authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

// uadps: multichannel refinement from the command line.
//
//   uadps refine    --mixture mix.wav --estimates a.wav,b.wav ...
//   uadps simulate  --out-dir scene/ --channels 4 --sources 2 ...
//   uadps evaluate  --estimates a.wav --reference ref.wav
//   uadps check-grad --denoiser gaussian:1.0 --grad-mode detached
//   uadps sweep     --mixture mix.wav --estimates a.wav --reference r.wav
//
// Every run prints its fully resolved configuration as key=value lines;
// saving that block to a file and passing it back through --config
// reproduces the run (command-line flags override config file values,
// which override built-in defaults). UADPS_SEED overrides the built-in
// seed default only. Exit codes: 0 success, 1 failed check (check-grad),
// 2 file I/O, 3 configuration, 4 denoiser protocol.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdarg>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <exception>
#include <filesystem>
#include <fstream>
#include <memory>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>

#include "uadps/metrics.hpp"
#include "uadps/parallel.hpp"
#include "uadps/pipeline.hpp"
#include "uadps/scene.hpp"
#include "uadps/wav.hpp"

namespace {

using namespace uadps;

struct Fail {
  int code;
  std::string msg;
};

std::string strf(const char* fmt, ...) {
  char buf[1024];
  va_list ap;
  va_start(ap, fmt);
  std::vsnprintf(buf, sizeof buf, fmt, ap);
  va_end(ap);
  return buf;
}

std::string fmt_g(double v) { return strf("%.17g", v); }

// --- shared option block ----------------------------------------------

struct Opts {
  std::string config_file;
  std::string mixture;
  std::string estimates;  // comma list
  std::string reference;  // comma list, optional
  std::string out_dir;
  double xi = 0.4;
  double alpha = 0.5;
  int t_start = 300;
  double eta = 0.95;
  double gamma = 1e-3;
  int n_taps = 13;
  int align_taps = 1;
  int stride = 1;
  double scm_delta = 5e-2;
  std::uint64_t seed = 0;
  std::string denoiser = "gaussian:1.0";
  std::string grad_mode = "detached";
  int fft_size = 512;
  int hop = 128;
  int jobs = 1;
  bool pad = false;
  bool trim = false;

  // sweep grids (comma lists; scalars elsewhere)
  std::string xi_list = "0.2,0.4,0.6,0.8,1.0,1.2";
  std::string t_list = "100,200,300,400,500";
  std::string alpha_list = "0,0.1,0.3,0.5,0.7,0.9,1.0";

  // simulate
  int channels = 4;
  int sources = 1;
  double duration = 1.0;
  double sample_rate = 16000.0;
  double snr = 0.0;
  double pseudo_sisdr = 5.0;
  int true_taps = 6;
  std::string noise = "white";

  // evaluate / check-grad
  bool machine = false;
  bool permute = false;
  double threshold = 1e-3;
  int probes = 64;
  double fd_step = 1e-4;
};

void add_stft_opts(CLI::App* sub, Opts* o) {
  sub->add_option("--fft-size", o->fft_size, "STFT frame length");
  sub->add_option("--hop", o->hop, "STFT hop size");
}

void add_length_opts(CLI::App* sub, Opts* o) {
  sub->add_flag("--pad", o->pad, "zero-pad shorter inputs to the longest");
  sub->add_flag("--trim", o->trim, "cut longer inputs to the shortest");
}

void add_refine_knobs(CLI::App* sub, Opts* o) {
  sub->add_option("--xi", o->xi, "likelihood guidance scale");
  sub->add_option("--alpha", o->alpha, "discriminative/aligned mix weight")
      ->check(CLI::Range(0.0, 1.0));
  sub->add_option("--t-start", o->t_start, "diffusion starting step");
  sub->add_option("--eta", o->eta, "SCM forgetting factor");
  sub->add_option("--gamma", o->gamma, "filter weighting floor");
  sub->add_option("--n-taps", o->n_taps, "filter length for estimation");
  sub->add_option("--align-taps", o->align_taps, "alignment filter length");
  sub->add_option("--stride", o->stride, "guidance reuse stride");
  sub->add_option("--scm-delta", o->scm_delta, "SCM inverse loading");
  sub->add_option("--denoiser", o->denoiser,
                  "oracle:<wavs>|gaussian:<variance>|extern:<command>");
  sub->add_option("--grad-mode", o->grad_mode, "detached|vjp");
  sub->add_option("--jobs", o->jobs, "worker threads")->check(CLI::Range(1, 256));
}

void add_seed_opt(CLI::App* sub, Opts* o) {
  sub->add_option("--seed", o->seed, "master random seed");
}

// UADPS_SEED replaces the built-in default only: an explicit --seed or a
// config-file seed= line still wins.
void resolve_seed(CLI::App* sub, Opts* o) {
  CLI::Option* op = sub->get_option_no_throw("--seed");
  if (op == nullptr || op->count() > 0) return;
  const char* env = std::getenv("UADPS_SEED");
  if (env == nullptr || *env == '\0') return;
  char* end = nullptr;
  unsigned long long v = std::strtoull(env, &end, 10);
  if (end == nullptr || *end != '\0')
    throw Fail{3, strf("UADPS_SEED is not an integer: '%s'", env)};
  o->seed = v;
}

// --- config file layering ------------------------------------------------
//
// Flat key=value files, '#' comments. The file's lines are turned into
// --key=value tokens and spliced in right after the subcommand name, before
// the real command line; every option takes its last occurrence, so flags
// beat the file and the file beats built-in defaults.

std::string trim_ws(const std::string& s) {
  std::size_t b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  std::size_t e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> config_tokens(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Fail{3, strf("cannot read config '%s'", path.c_str())};
  std::vector<std::string> toks;
  std::string line;
  while (std::getline(in, line)) {
    line = trim_ws(line);
    if (line.empty() || line[0] == '#') continue;
    std::size_t eq = line.find('=');
    if (eq == std::string::npos || eq == 0)
      throw Fail{3, strf("config '%s': expected key=value, got '%s'",
                         path.c_str(), line.c_str())};
    std::string k = trim_ws(line.substr(0, eq));
    std::string v = trim_ws(line.substr(eq + 1));
    if (v.size() >= 2 && v.front() == '"' && v.back() == '"')
      v = v.substr(1, v.size() - 2);
    if (k == "config") continue;  // a config file cannot chain another
    if (v.empty()) continue;      // empty means unset, same as the default
    toks.push_back("--" + k + "=" + v);
  }
  return toks;
}

void inject_config(std::vector<std::string>* args) {
  std::string file;
  for (std::size_t i = 0; i < args->size(); ++i) {
    const std::string& t = (*args)[i];
    if (t == "--config" && i + 1 < args->size())
      file = (*args)[i + 1];
    else if (t.rfind("--config=", 0) == 0)
      file = t.substr(9);
  }
  if (file.empty()) return;
  if (args->empty() || (*args)[0].empty() || (*args)[0][0] == '-') return;
  std::vector<std::string> toks = config_tokens(file);
  args->insert(args->begin() + 1, toks.begin(), toks.end());
}

void take_last_all(CLI::App* sub) {
  for (CLI::Option* op : sub->get_options())
    op->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
}

// --- resolved-config echo ----------------------------------------------

struct KV {
  std::string k, v;
};

void print_config(const char* sub, const std::vector<KV>& kv) {
  std::printf("# uadps %s, resolved configuration (re-usable via --config)\n",
              sub);
  for (const KV& e : kv) {
    if (e.v.find(' ') != std::string::npos)
      std::printf("%s=\"%s\"\n", e.k.c_str(), e.v.c_str());
    else
      std::printf("%s=%s\n", e.k.c_str(), e.v.c_str());
  }
  std::fflush(stdout);
}

std::vector<KV> refine_kv(const Opts& o) {
  return {{"mixture", o.mixture},
          {"estimates", o.estimates},
          {"reference", o.reference},
          {"out-dir", o.out_dir},
          {"xi", fmt_g(o.xi)},
          {"alpha", fmt_g(o.alpha)},
          {"t-start", std::to_string(o.t_start)},
          {"eta", fmt_g(o.eta)},
          {"gamma", fmt_g(o.gamma)},
          {"n-taps", std::to_string(o.n_taps)},
          {"align-taps", std::to_string(o.align_taps)},
          {"stride", std::to_string(o.stride)},
          {"scm-delta", fmt_g(o.scm_delta)},
          {"seed", std::to_string(o.seed)},
          {"denoiser", o.denoiser},
          {"grad-mode", o.grad_mode},
          {"fft-size", std::to_string(o.fft_size)},
          {"hop", std::to_string(o.hop)},
          {"jobs", std::to_string(o.jobs)},
          {"pad", o.pad ? "true" : "false"},
          {"trim", o.trim ? "true" : "false"}};
}

// --- small parsing helpers ---------------------------------------------

std::vector<std::string> split_commas(const std::string& s) {
  std::vector<std::string> out;
  std::size_t pos = 0;
  while (pos <= s.size()) {
    std::size_t c = s.find(',', pos);
    if (c == std::string::npos) c = s.size();
    std::string item = s.substr(pos, c - pos);
    if (!item.empty()) out.push_back(item);
    pos = c + 1;
  }
  return out;
}

std::vector<double> parse_dlist(const std::string& s, const char* flag) {
  std::vector<double> out;
  for (const std::string& item : split_commas(s)) {
    char* end = nullptr;
    double v = std::strtod(item.c_str(), &end);
    if (end == nullptr || *end != '\0' || !std::isfinite(v))
      throw Fail{3, strf("%s: bad number '%s'", flag, item.c_str())};
    out.push_back(v);
  }
  if (out.empty()) throw Fail{3, strf("%s: empty list", flag)};
  return out;
}

std::vector<int> parse_ilist(const std::string& s, const char* flag) {
  std::vector<int> out;
  for (double v : parse_dlist(s, flag)) {
    if (v != std::floor(v))
      throw Fail{3, strf("%s: expected integers", flag)};
    out.push_back(static_cast<int>(v));
  }
  return out;
}

struct DenoiserSpec {
  enum Kind { kOracle, kGaussian, kExtern } kind;
  std::string payload;
  double variance = 1.0;
};

DenoiserSpec parse_denoiser(const std::string& s) {
  DenoiserSpec d;
  std::size_t c = s.find(':');
  std::string kind = s.substr(0, c);
  d.payload = c == std::string::npos ? "" : s.substr(c + 1);
  if (kind == "oracle") {
    d.kind = DenoiserSpec::kOracle;
  } else if (kind == "gaussian") {
    d.kind = DenoiserSpec::kGaussian;
    if (!d.payload.empty()) {
      char* end = nullptr;
      d.variance = std::strtod(d.payload.c_str(), &end);
      if (end == nullptr || *end != '\0' || !(d.variance >= 0.0))
        throw Fail{3, strf("--denoiser gaussian: bad variance '%s'",
                           d.payload.c_str())};
    }
  } else if (kind == "extern") {
    d.kind = DenoiserSpec::kExtern;
    if (d.payload.empty())
      throw Fail{3, "--denoiser extern: missing command"};
  } else {
    throw Fail{3, strf("--denoiser: unknown kind '%s' "
                       "(oracle|gaussian|extern)",
                       kind.c_str())};
  }
  return d;
}

GradMode parse_grad_mode(const std::string& s) {
  if (s == "detached") return GradMode::kDetachedChain;
  if (s == "vjp") return GradMode::kFullVjp;
  throw Fail{3, strf("--grad-mode: '%s' is not detached|vjp", s.c_str())};
}

// --- WAV plumbing -------------------------------------------------------

WavData load_wav(const std::string& path) {
  try {
    return read_wav(path);
  } catch (const std::exception& e) {
    throw Fail{2, strf("cannot read '%s': %s", path.c_str(), e.what())};
  }
}

void save_wav(const std::string& path, const WavData& w) {
  try {
    write_wav(path, w);
  } catch (const std::exception& e) {
    throw Fail{2, strf("cannot write '%s': %s", path.c_str(), e.what())};
  }
}

std::vector<double> mono(const WavData& w, const std::string& path) {
  if (w.num_channels() != 1)
    throw Fail{3, strf("'%s' must be single-channel, has %d", path.c_str(),
                       w.num_channels())};
  return w.samples[0];
}

// Forces every loaded waveform onto one sample rate and one length.
// Mismatched lengths are an error unless --pad or --trim says how to
// reconcile them.
int unify_lengths(std::vector<WavData*>& all,
                  const std::vector<std::string>& names, bool pad,
                  bool trim) {
  if (pad && trim) throw Fail{3, "--pad and --trim are mutually exclusive"};
  double sr = all[0]->sample_rate;
  std::size_t lo = all[0]->num_frames(), hi = lo;
  for (std::size_t i = 0; i < all.size(); ++i) {
    if (all[i]->sample_rate != sr)
      throw Fail{3, strf("'%s': sample rate %g differs from '%s' (%g)",
                         names[i].c_str(), all[i]->sample_rate,
                         names[0].c_str(), sr)};
    lo = std::min(lo, all[i]->num_frames());
    hi = std::max(hi, all[i]->num_frames());
  }
  if (lo != hi && !pad && !trim)
    throw Fail{3, strf("input lengths differ (%zu..%zu samples); pass "
                       "--pad or --trim ('%s' vs '%s')",
                       lo, hi, names[0].c_str(), names.back().c_str())};
  std::size_t n = trim ? lo : hi;
  for (WavData* w : all)
    for (std::vector<double>& ch : w->samples) ch.resize(n, 0.0);
  return static_cast<int>(n);
}

// --- refine -------------------------------------------------------------

struct LoadedScene {
  WavData mixture;
  std::vector<WavData> estimates;
  std::vector<WavData> references;
  std::vector<WavData> oracles;
  std::vector<std::string> est_paths;
  int num_samples = 0;
};

LoadedScene load_refine_inputs(const Opts& o, const DenoiserSpec& dn) {
  LoadedScene in;
  if (o.mixture.empty()) throw Fail{3, "--mixture is required"};
  in.est_paths = split_commas(o.estimates);
  if (in.est_paths.empty()) throw Fail{3, "--estimates is required"};

  in.mixture = load_wav(o.mixture);
  if (in.mixture.num_channels() < 2)
    throw Fail{3, strf("'%s': mixture needs >= 2 channels, has %d",
                       o.mixture.c_str(), in.mixture.num_channels())};
  for (const std::string& p : in.est_paths) in.estimates.push_back(load_wav(p));

  std::vector<std::string> ref_paths = split_commas(o.reference);
  if (!ref_paths.empty() && ref_paths.size() != in.est_paths.size())
    throw Fail{3, strf("--reference lists %zu files for %zu estimates",
                       ref_paths.size(), in.est_paths.size())};
  for (const std::string& p : ref_paths) in.references.push_back(load_wav(p));

  if (dn.kind == DenoiserSpec::kOracle) {
    std::vector<std::string> tp = split_commas(dn.payload);
    if (tp.size() != in.est_paths.size())
      throw Fail{3, strf("--denoiser oracle lists %zu wavs for %zu sources",
                         tp.size(), in.est_paths.size())};
    for (const std::string& p : tp) in.oracles.push_back(load_wav(p));
  }

  std::vector<WavData*> all{&in.mixture};
  std::vector<std::string> names{o.mixture};
  auto take = [&](std::vector<WavData>& v, const std::vector<std::string>& n) {
    for (std::size_t i = 0; i < v.size(); ++i) {
      all.push_back(&v[i]);
      names.push_back(i < n.size() ? n[i] : "input");
    }
  };
  take(in.estimates, in.est_paths);
  take(in.references, ref_paths);
  take(in.oracles, split_commas(dn.payload));
  in.num_samples = unify_lengths(all, names, o.pad, o.trim);
  if (in.num_samples < o.fft_size)
    throw Fail{3, strf("inputs are shorter than one FFT frame (%d < %d)",
                       in.num_samples, o.fft_size)};
  return in;
}

// The I/O boundary keeps the DC row so synthesis is lossless; the
// pipeline carries it through untouched.
MultiSpectrogram stft_multi(const WavData& w, const Opts& o) {
  MultiSpectrogram m;
  for (const std::vector<double>& ch : w.samples)
    m.channels.push_back(
        stft(ch, o.fft_size, o.hop, true, w.sample_rate));
  return m;
}

struct BuiltDenoisers {
  std::vector<std::unique_ptr<Denoiser>> own;
  std::vector<Denoiser*> ptrs;
};

BuiltDenoisers build_denoisers(const DenoiserSpec& dn, const LoadedScene& in,
                               const Opts& o, const Schedule& sched) {
  BuiltDenoisers b;
  const std::size_t K = in.estimates.size();
  switch (dn.kind) {
    case DenoiserSpec::kOracle:
      for (std::size_t k = 0; k < K; ++k) {
        Spectrogram truth =
            compress(stft(in.oracles[k].samples[0], o.fft_size, o.hop,
                          false, in.oracles[k].sample_rate));
        b.own.push_back(std::make_unique<OracleDenoiser>(truth, sched));
        b.ptrs.push_back(b.own.back().get());
      }
      break;
    case DenoiserSpec::kGaussian:
      b.own.push_back(
          std::make_unique<GaussianPriorDenoiser>(dn.variance, sched));
      for (std::size_t k = 0; k < K; ++k) b.ptrs.push_back(b.own[0].get());
      break;
    case DenoiserSpec::kExtern:
      b.own.push_back(std::make_unique<ExternalDenoiser>(dn.payload, sched));
      for (std::size_t k = 0; k < K; ++k) b.ptrs.push_back(b.own[0].get());
      break;
  }
  return b;
}

RefineConfig refine_config(const Opts& o) {
  RefineConfig cfg;
  cfg.t_start = o.t_start;
  cfg.alpha_interp = o.alpha;
  cfg.eta = o.eta;
  cfg.scm_load_delta = o.scm_delta;
  cfg.stride = o.stride;
  cfg.seed = o.seed;
  cfg.guidance.xi = o.xi;
  cfg.guidance.grad_mode = parse_grad_mode(o.grad_mode);
  cfg.guidance.fcp.n_taps = o.n_taps;
  cfg.guidance.fcp.gamma = o.gamma;
  cfg.align.n_taps = o.align_taps;
  cfg.align.gamma = o.gamma;
  if (cfg.t_start < 0) throw Fail{3, "--t-start must be >= 0"};
  if (cfg.stride < 1) throw Fail{3, "--stride must be >= 1"};
  if (cfg.guidance.fcp.n_taps < 1) throw Fail{3, "--n-taps must be >= 1"};
  if (cfg.align.n_taps < 1) throw Fail{3, "--align-taps must be >= 1"};
  return cfg;
}

int cmd_refine(const Opts& o) {
  print_config("refine", refine_kv(o));
  DenoiserSpec dn = parse_denoiser(o.denoiser);
  LoadedScene in = load_refine_inputs(o, dn);
  set_max_threads(o.jobs);

  Schedule sched = make_schedule();
  MultiSpectrogram mix = stft_multi(in.mixture, o);
  std::vector<Spectrogram> est;
  for (const WavData& w : in.estimates)
    est.push_back(stft(mono(w, "estimate"), o.fft_size, o.hop, true,
                       w.sample_rate));
  BuiltDenoisers dens = build_denoisers(dn, in, o, sched);
  RefineConfig cfg = refine_config(o);
  RefineResult res = refine(mix, est, dens.ptrs, cfg, sched);

  namespace fs = std::filesystem;
  std::string dir = o.out_dir.empty() ? "." : o.out_dir;
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw Fail{2, strf("cannot create '%s': %s", dir.c_str(),
                             ec.message().c_str())};

  const std::size_t K = est.size();
  std::vector<std::vector<double>> out_time(K);
  for (std::size_t k = 0; k < K; ++k) {
    out_time[k] = istft(res.refined[k], in.num_samples);
    WavData w;
    w.sample_rate = in.mixture.sample_rate;
    w.samples = {out_time[k]};
    save_wav(dir + "/refined_" + std::to_string(k) + ".wav", w);
  }

  std::ofstream rep(dir + "/report.txt");
  if (!rep) throw Fail{2, strf("cannot write '%s/report.txt'", dir.c_str())};
  rep << "# uadps refine report\n";
  for (const KV& e : refine_kv(o)) rep << e.k << "=" << e.v << "\n";
  int fcp_failures = 0;
  for (const StepReport& s : res.steps) fcp_failures += s.fcp_solve_failures;
  rep << "steps=" << res.steps.size() << "\n";
  rep << "fcp_solve_failures=" << fcp_failures << "\n";
  for (const StepReport& s : res.steps) {
    rep << "step=" << s.t << " quadratic=" << fmt_g(s.quadratic_value);
    for (std::size_t k = 0; k < s.grad_norm.size(); ++k)
      rep << " grad_norm_" << k << "=" << fmt_g(s.grad_norm[k]);
    rep << " fcp_failures=" << s.fcp_solve_failures << "\n";
  }

  if (!in.references.empty()) {
    double mean_in = 0.0, mean_out = 0.0;
    std::printf("source  sisdr_in  sisdr_out\n");
    for (std::size_t k = 0; k < K; ++k) {
      std::vector<double> ref = in.references[k].samples[0];
      double si_in = si_sdr(mono(in.estimates[k], in.est_paths[k]), ref);
      double si_out = si_sdr(out_time[k], ref);
      mean_in += si_in / static_cast<double>(K);
      mean_out += si_out / static_cast<double>(K);
      std::printf("%6zu  %8.2f  %9.2f\n", k, si_in, si_out);
      rep << "sisdr_in_" << k << "=" << fmt_g(si_in) << "\n";
      rep << "sisdr_out_" << k << "=" << fmt_g(si_out) << "\n";
    }
    std::printf("  mean  %8.2f  %9.2f\n", mean_in, mean_out);
    rep << "sisdr_in_mean=" << fmt_g(mean_in) << "\n";
    rep << "sisdr_out_mean=" << fmt_g(mean_out) << "\n";
  }
  std::printf("wrote %zu refined wavs and report.txt to %s\n", K,
              dir.c_str());
  return 0;
}

// --- simulate ------------------------------------------------------------

int cmd_simulate(const Opts& o) {
  print_config("simulate",
               {{"out-dir", o.out_dir},
                {"channels", std::to_string(o.channels)},
                {"sources", std::to_string(o.sources)},
                {"duration", fmt_g(o.duration)},
                {"sample-rate", fmt_g(o.sample_rate)},
                {"snr", fmt_g(o.snr)},
                {"pseudo-sisdr", fmt_g(o.pseudo_sisdr)},
                {"true-taps", std::to_string(o.true_taps)},
                {"noise", o.noise},
                {"fft-size", std::to_string(o.fft_size)},
                {"hop", std::to_string(o.hop)},
                {"seed", std::to_string(o.seed)}});
  if (o.out_dir.empty()) throw Fail{3, "--out-dir is required"};

  SceneSpec sp;
  sp.channels = o.channels;
  sp.sources = o.sources;
  sp.true_taps = o.true_taps;
  sp.duration_s = o.duration;
  sp.sample_rate = o.sample_rate;
  sp.fft_size = o.fft_size;
  sp.hop = o.hop;
  sp.snr_db = o.snr;
  sp.pseudo_sisdr_db = o.pseudo_sisdr;
  sp.seed = o.seed;
  std::size_t c = o.noise.find(':');
  std::string kind = o.noise.substr(0, c);
  std::string arg = c == std::string::npos ? "" : o.noise.substr(c + 1);
  if (kind == "white") {
    sp.noise.kind = NoiseKind::kSpatiallyWhite;
    if (!arg.empty()) sp.noise.variance = std::strtod(arg.c_str(), nullptr);
  } else if (kind == "diffuse") {
    sp.noise.kind = NoiseKind::kDiffuseLike;
    if (!arg.empty()) sp.noise.coherence = std::strtod(arg.c_str(), nullptr);
  } else {
    throw Fail{3, strf("--noise: '%s' is not white[:var]|diffuse[:rate]",
                       o.noise.c_str())};
  }

  Scene sc = make_scene(sp);
  try {
    dump_scene(sc, o.out_dir);
  } catch (const std::exception& e) {
    throw Fail{2, strf("cannot write scene to '%s': %s", o.out_dir.c_str(),
                       e.what())};
  }
  SceneManifest m = load_scene_dir(o.out_dir);  // self-check the round trip
  std::printf("wrote scene: %d channels, %d sources, %d samples, seed %llu\n",
              m.channels, m.sources, sc.num_samples,
              static_cast<unsigned long long>(m.seed));
  return 0;
}

// --- evaluate --------------------------------------------------------------

int cmd_evaluate(const Opts& o) {
  print_config("evaluate", {{"estimates", o.estimates},
                            {"reference", o.reference},
                            {"permute", o.permute ? "true" : "false"},
                            {"machine", o.machine ? "true" : "false"},
                            {"pad", o.pad ? "true" : "false"},
                            {"trim", o.trim ? "true" : "false"}});
  std::vector<std::string> est_paths = split_commas(o.estimates);
  std::vector<std::string> ref_paths = split_commas(o.reference);
  if (est_paths.empty() || ref_paths.empty())
    throw Fail{3, "--estimates and --reference are required"};
  if (est_paths.size() != ref_paths.size())
    throw Fail{3, strf("%zu estimates vs %zu references", est_paths.size(),
                       ref_paths.size())};

  std::vector<WavData> est, ref;
  std::vector<WavData*> all;
  std::vector<std::string> names;
  for (const std::string& p : est_paths) est.push_back(load_wav(p));
  for (const std::string& p : ref_paths) ref.push_back(load_wav(p));
  for (std::size_t i = 0; i < est.size(); ++i) {
    all.push_back(&est[i]);
    names.push_back(est_paths[i]);
  }
  for (std::size_t i = 0; i < ref.size(); ++i) {
    all.push_back(&ref[i]);
    names.push_back(ref_paths[i]);
  }
  unify_lengths(all, names, o.pad, o.trim);

  const std::size_t K = est.size();
  std::vector<std::vector<double>> es, rs;
  for (std::size_t k = 0; k < K; ++k) {
    es.push_back(mono(est[k], est_paths[k]));
    rs.push_back(mono(ref[k], ref_paths[k]));
  }
  std::vector<int> perm(K);
  for (std::size_t k = 0; k < K; ++k) perm[k] = static_cast<int>(k);
  if (o.permute && K > 1) perm = permute_match(es, rs);

  double mean = 0.0;
  std::printf("%-28s %-28s %9s\n", "estimate", "reference", "si_sdr_db");
  for (std::size_t k = 0; k < K; ++k) {
    double v = si_sdr(es[static_cast<std::size_t>(perm[k])], rs[k]);
    mean += v / static_cast<double>(K);
    std::printf("%-28s %-28s %9.1f\n",
                est_paths[static_cast<std::size_t>(perm[k])].c_str(),
                ref_paths[k].c_str(), v);
    if (o.machine)
      std::printf("pair=%zu estimate=%s reference=%s sisdr=%s\n", k,
                  est_paths[static_cast<std::size_t>(perm[k])].c_str(),
                  ref_paths[k].c_str(), fmt_g(v).c_str());
  }
  std::printf("%-28s %-28s %9.1f\n", "mean", "", mean);
  if (o.machine) std::printf("mean_sisdr=%s\n", fmt_g(mean).c_str());
  return 0;
}

// --- check-grad -------------------------------------------------------------

int cmd_check_grad(const Opts& o) {
  print_config("check-grad", {{"denoiser", o.denoiser},
                              {"grad-mode", o.grad_mode},
                              {"threshold", fmt_g(o.threshold)},
                              {"probes", std::to_string(o.probes)},
                              {"fd-step", fmt_g(o.fd_step)},
                              {"t-start", std::to_string(o.t_start)},
                              {"n-taps", std::to_string(o.n_taps)},
                              {"gamma", fmt_g(o.gamma)},
                              {"eta", fmt_g(o.eta)},
                              {"fft-size", std::to_string(o.fft_size)},
                              {"hop", std::to_string(o.hop)},
                              {"seed", std::to_string(o.seed)}});
  DenoiserSpec dn = parse_denoiser(o.denoiser);
  set_max_threads(o.jobs);

  // a small self-contained scene; the oracle denoiser uses its clean source
  SceneSpec sp;
  sp.channels = 2;
  sp.sources = 1;
  sp.duration_s = 0.3;
  sp.fft_size = o.fft_size;
  sp.hop = o.hop;
  sp.snr_db = 5.0;
  sp.seed = o.seed + 1;
  Scene sc = make_scene(sp);

  Schedule sched = make_schedule();
  const int t = std::max(1, std::min(o.t_start, sched.T));
  Spectrogram truth_bar = compress(sc.clean[0]);
  GaussianStream g(o.seed + 2);
  std::vector<Spectrogram> xbar{forward_to_step(truth_bar, t, sched, g)};

  GuidanceConfig gcfg;
  gcfg.xi = o.xi;
  gcfg.grad_mode = parse_grad_mode(o.grad_mode);
  gcfg.fcp.n_taps = o.n_taps;
  gcfg.fcp.gamma = o.gamma;
  PrepareScmResult pr =
      prepare_scm(sc.mixture, sc.pseudo, gcfg.fcp, o.eta, o.scm_delta);

  std::unique_ptr<Denoiser> den;
  switch (dn.kind) {
    case DenoiserSpec::kOracle:
      den = std::make_unique<OracleDenoiser>(truth_bar, sched);
      break;
    case DenoiserSpec::kGaussian:
      den = std::make_unique<GaussianPriorDenoiser>(dn.variance, sched);
      break;
    case DenoiserSpec::kExtern:
      den = std::make_unique<ExternalDenoiser>(dn.payload, sched);
      break;
  }
  std::vector<Denoiser*> dens{den.get()};

  if (gcfg.grad_mode == GradMode::kFullVjp && !den->has_vjp())
    throw CapabilityError("--grad-mode vjp needs an analytic denoiser "
                          "jacobian; this denoiser has none");

  FdCheckResult r = finite_diff_check(xbar, dens, t, sc.mixture, pr.inv_scm,
                                      gcfg, o.probes, o.fd_step, o.seed + 3);
  bool ok = r.max_rel_err < o.threshold;
  std::printf("probes=%d max_rel_err=%s mean_rel_err=%s threshold=%s: %s\n",
              r.probes, fmt_g(r.max_rel_err).c_str(),
              fmt_g(r.mean_rel_err).c_str(), fmt_g(o.threshold).c_str(),
              ok ? "PASS" : "FAIL");
  return ok ? 0 : 1;
}

// --- sweep -------------------------------------------------------------------

int cmd_sweep(const Opts& o) {
  print_config("sweep", {{"mixture", o.mixture},
                         {"estimates", o.estimates},
                         {"reference", o.reference},
                         {"out-dir", o.out_dir},
                         {"xi", o.xi_list},
                         {"t-start", o.t_list},
                         {"alpha", o.alpha_list},
                         {"eta", fmt_g(o.eta)},
                         {"gamma", fmt_g(o.gamma)},
                         {"n-taps", std::to_string(o.n_taps)},
                         {"align-taps", std::to_string(o.align_taps)},
                         {"stride", std::to_string(o.stride)},
                         {"scm-delta", fmt_g(o.scm_delta)},
                         {"seed", std::to_string(o.seed)},
                         {"denoiser", o.denoiser},
                         {"grad-mode", o.grad_mode},
                         {"fft-size", std::to_string(o.fft_size)},
                         {"hop", std::to_string(o.hop)},
                         {"jobs", std::to_string(o.jobs)},
                         {"pad", o.pad ? "true" : "false"},
                         {"trim", o.trim ? "true" : "false"}});
  DenoiserSpec dn = parse_denoiser(o.denoiser);
  LoadedScene in = load_refine_inputs(o, dn);
  if (in.references.empty())
    throw Fail{3, "sweep needs --reference for its metric"};
  std::vector<double> xis = parse_dlist(o.xi_list, "--xi");
  std::vector<int> tps = parse_ilist(o.t_list, "--t-start");
  std::vector<double> alphas = parse_dlist(o.alpha_list, "--alpha");
  for (int tp : tps)
    if (tp < 0) throw Fail{3, "--t-start values must be >= 0"};
  for (double a : alphas)
    if (a < 0.0 || a > 1.0) throw Fail{3, "--alpha values must be in [0,1]"};

  Schedule sched = make_schedule();
  MultiSpectrogram mix = stft_multi(in.mixture, o);
  std::vector<Spectrogram> est;
  for (const WavData& w : in.estimates)
    est.push_back(stft(mono(w, "estimate"), o.fft_size, o.hop, true,
                       w.sample_rate));
  // baseline through the same stft -> istft path as the sweep rows, so the
  // alpha = 1 rows reproduce it exactly
  const std::size_t K = est.size();
  std::vector<std::vector<double>> refs;
  double base_mean = 0.0;
  for (std::size_t k = 0; k < K; ++k) {
    refs.push_back(in.references[k].samples[0]);
    base_mean +=
        si_sdr(istft(est[k], in.num_samples), refs[k]) / static_cast<double>(K);
  }

  // one refine per (xi, t'); alpha only reweights the final interpolation,
  // so its rows are computed from the same run, bit-identical to a full
  // refine at that alpha
  struct Cell {
    double xi;
    int tp;
  };
  std::vector<Cell> cells;
  for (double xi : xis)
    for (int tp : tps) cells.push_back({xi, tp});
  const std::size_t A = alphas.size();
  std::vector<std::string> rows(cells.size() * A);

  set_max_threads(1);  // cells are the unit of parallelism here
  std::atomic<std::size_t> next{0};
  std::mutex err_mu;
  std::exception_ptr first_err;

  auto worker = [&]() {
    for (;;) {
      std::size_t i = next.fetch_add(1);
      if (i >= cells.size()) return;
      try {
        Opts co = o;
        co.xi = cells[i].xi;
        co.t_start = cells[i].tp;
        co.alpha = 0.0;
        RefineConfig cfg = refine_config(co);
        BuiltDenoisers dens = build_denoisers(dn, in, o, sched);
        RefineResult res = refine(mix, est, dens.ptrs, cfg, sched);
        for (std::size_t j = 0; j < A; ++j) {
          const double a = alphas[j];
          double mean = 0.0;
          for (std::size_t k = 0; k < K; ++k) {
            Spectrogram mixed = est[k];
            if (a == 1.0) {
              // exact pass-through, matching the pipeline's own branch
            } else if (a == 0.0) {
              mixed = res.aligned[k];
            } else {
              mixed.data =
                  a * est[k].data + (1.0 - a) * res.aligned[k].data;
            }
            mean += si_sdr(istft(mixed, in.num_samples), refs[k]) /
                    static_cast<double>(K);
          }
          rows[i * A + j] = strf(
              "xi=%s t_start=%d alpha=%s sisdr=%s gain=%s",
              fmt_g(cells[i].xi).c_str(), cells[i].tp, fmt_g(a).c_str(),
              fmt_g(mean).c_str(), fmt_g(mean - base_mean).c_str());
        }
      } catch (...) {
        std::lock_guard<std::mutex> lk(err_mu);
        if (!first_err) first_err = std::current_exception();
        return;
      }
    }
  };
  std::size_t n_workers =
      std::min<std::size_t>(static_cast<std::size_t>(o.jobs), cells.size());
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w + 1 < n_workers; ++w) pool.emplace_back(worker);
  worker();
  for (std::thread& th : pool) th.join();
  if (first_err) std::rethrow_exception(first_err);

  std::ofstream out;
  if (!o.out_dir.empty()) {
    std::error_code ec;
    std::filesystem::create_directories(o.out_dir, ec);
    if (ec) throw Fail{2, strf("cannot create '%s': %s", o.out_dir.c_str(),
                               ec.message().c_str())};
    out.open(o.out_dir + "/sweep.txt");
    if (!out)
      throw Fail{2, strf("cannot write '%s/sweep.txt'", o.out_dir.c_str())};
    out << "# one row per grid cell; gain is vs the raw estimates\n";
    out << "baseline_sisdr=" << fmt_g(base_mean) << "\n";
  }
  std::printf("baseline_sisdr=%s\n", fmt_g(base_mean).c_str());
  for (const std::string& r : rows) {
    std::printf("%s\n", r.c_str());
    if (out) out << r << "\n";
  }
  return 0;
}

// --- entry --------------------------------------------------------------------

int dispatch(CLI::App& app, Opts& o, CLI::App* refine_c, CLI::App* simulate_c,
             CLI::App* evaluate_c, CLI::App* check_c, CLI::App* sweep_c) {
  for (CLI::App* sub : {refine_c, simulate_c, evaluate_c, check_c, sweep_c})
    if (sub->parsed()) resolve_seed(sub, &o);
  if (refine_c->parsed()) return cmd_refine(o);
  if (simulate_c->parsed()) return cmd_simulate(o);
  if (evaluate_c->parsed()) return cmd_evaluate(o);
  if (check_c->parsed()) return cmd_check_grad(o);
  if (sweep_c->parsed()) return cmd_sweep(o);
  std::fputs(app.help().c_str(), stdout);
  return 3;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"multichannel refinement pipeline"};
  app.require_subcommand(0, 1);
  Opts o;

  CLI::App* refine_c =
      app.add_subcommand("refine", "refine estimates against a mixture");
  refine_c->add_option("--config", o.config_file, "key=value config file");
  refine_c->add_option("--mixture", o.mixture, "multichannel mixture wav");
  refine_c->add_option("--estimates", o.estimates,
                       "comma list of estimate wavs");
  refine_c->add_option("--reference", o.reference,
                       "comma list of reference wavs");
  refine_c->add_option("--out-dir", o.out_dir, "output directory");
  add_refine_knobs(refine_c, &o);
  add_seed_opt(refine_c, &o);
  add_stft_opts(refine_c, &o);
  add_length_opts(refine_c, &o);

  CLI::App* simulate_c =
      app.add_subcommand("simulate", "synthesize a ground-truth scene");
  simulate_c->add_option("--config", o.config_file, "key=value config file");
  simulate_c->add_option("--out-dir", o.out_dir, "scene directory");
  simulate_c->add_option("--channels", o.channels, "microphone count");
  simulate_c->add_option("--sources", o.sources, "source count");
  simulate_c->add_option("--duration", o.duration, "seconds");
  simulate_c->add_option("--sample-rate", o.sample_rate, "Hz");
  simulate_c->add_option("--snr", o.snr, "mixture SNR in dB");
  simulate_c->add_option("--pseudo-sisdr", o.pseudo_sisdr,
                         "SI-SDR of the fabricated estimates");
  simulate_c->add_option("--true-taps", o.true_taps, "true ATF length");
  simulate_c->add_option("--noise", o.noise, "white[:var]|diffuse[:rate]");
  add_seed_opt(simulate_c, &o);
  add_stft_opts(simulate_c, &o);

  CLI::App* evaluate_c =
      app.add_subcommand("evaluate", "SI-SDR of estimates vs references");
  evaluate_c->add_option("--config", o.config_file, "key=value config file");
  evaluate_c->add_option("--estimates", o.estimates,
                         "comma list of estimate wavs");
  evaluate_c->add_option("--reference", o.reference,
                         "comma list of reference wavs");
  evaluate_c->add_flag("--permute", o.permute,
                       "best permutation matching (K <= 4)");
  evaluate_c->add_flag("--machine", o.machine, "machine-readable rows");
  add_length_opts(evaluate_c, &o);

  CLI::App* check_c = app.add_subcommand(
      "check-grad", "finite-difference check of the likelihood gradient");
  check_c->add_option("--config", o.config_file, "key=value config file");
  check_c->add_option("--threshold", o.threshold, "pass bound");
  check_c->add_option("--probes", o.probes, "probe count")
      ->check(CLI::Range(1, 100000));
  check_c->add_option("--fd-step", o.fd_step, "central difference step");
  check_c->add_option("--xi", o.xi, "guidance scale (unused by the check)");
  check_c->add_option("--t-start", o.t_start, "diffusion step to probe at");
  check_c->add_option("--eta", o.eta, "SCM forgetting factor");
  check_c->add_option("--gamma", o.gamma, "filter weighting floor");
  check_c->add_option("--n-taps", o.n_taps, "filter length");
  check_c->add_option("--scm-delta", o.scm_delta, "SCM inverse loading");
  check_c->add_option("--denoiser", o.denoiser,
                      "oracle|gaussian:<variance>|extern:<command>");
  check_c->add_option("--grad-mode", o.grad_mode, "detached|vjp");
  check_c->add_option("--jobs", o.jobs, "worker threads");
  add_seed_opt(check_c, &o);
  add_stft_opts(check_c, &o);

  CLI::App* sweep_c =
      app.add_subcommand("sweep", "grid over xi, t-start, and alpha");
  sweep_c->add_option("--config", o.config_file, "key=value config file");
  sweep_c->add_option("--mixture", o.mixture, "multichannel mixture wav");
  sweep_c->add_option("--estimates", o.estimates,
                      "comma list of estimate wavs");
  sweep_c->add_option("--reference", o.reference,
                      "comma list of reference wavs");
  sweep_c->add_option("--out-dir", o.out_dir, "sweep.txt location");
  sweep_c->add_option("--xi", o.xi_list, "comma list of guidance scales");
  sweep_c->add_option("--t-start", o.t_list, "comma list of starting steps");
  sweep_c->add_option("--alpha", o.alpha_list, "comma list of mix weights");
  sweep_c->add_option("--eta", o.eta, "SCM forgetting factor");
  sweep_c->add_option("--gamma", o.gamma, "filter weighting floor");
  sweep_c->add_option("--n-taps", o.n_taps, "filter length for estimation");
  sweep_c->add_option("--align-taps", o.align_taps,
                      "alignment filter length");
  sweep_c->add_option("--stride", o.stride, "guidance reuse stride");
  sweep_c->add_option("--scm-delta", o.scm_delta, "SCM inverse loading");
  sweep_c->add_option("--denoiser", o.denoiser,
                      "oracle:<wavs>|gaussian:<variance>|extern:<command>");
  sweep_c->add_option("--grad-mode", o.grad_mode, "detached|vjp");
  sweep_c->add_option("--jobs", o.jobs, "parallel sweep cells")
      ->check(CLI::Range(1, 256));
  add_seed_opt(sweep_c, &o);
  add_stft_opts(sweep_c, &o);
  add_length_opts(sweep_c, &o);

  for (CLI::App* sub : {refine_c, simulate_c, evaluate_c, check_c, sweep_c})
    take_last_all(sub);

  try {
    std::vector<std::string> args;
    for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
    inject_config(&args);
    std::reverse(args.begin(), args.end());  // CLI11 consumes from the back
    app.parse(args);
  } catch (const CLI::ParseError& e) {
    int rc = app.exit(e);
    return rc == 0 ? 0 : 3;
  } catch (const Fail& f) {
    std::fprintf(stderr, "uadps: %s\n", f.msg.c_str());
    return f.code;
  }

  try {
    return dispatch(app, o, refine_c, simulate_c, evaluate_c, check_c,
                    sweep_c);
  } catch (const Fail& f) {
    std::fprintf(stderr, "uadps: %s\n", f.msg.c_str());
    return f.code;
  } catch (const DenoiserProtocolError& e) {
    std::fprintf(stderr, "uadps: denoiser protocol: %s\n", e.what());
    return 4;
  } catch (const Error& e) {
    std::fprintf(stderr, "uadps: %s\n", e.what());
    return 3;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "uadps: %s\n", e.what());
    return 3;
  }
}
