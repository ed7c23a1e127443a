// Command line front end. Subcommands cover instance generation, functional
// evaluation, the interpolation sweep over tail levels, the small-radius
// asymptotics, CVaR training, pathology scanning, closed-form oracles, and
// the randomized property suite. `run --config FILE` replays any subcommand
// from a JSON file with the same keys as the long options.
//
// Exit codes: 0 success, 1 a computation-level check failed (property
// failure, training divergence), 2 bad arguments or malformed input.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <unistd.h>

#include <CLI11.hpp>
#include <json.hpp>

#include "prl/prl.hpp"

namespace {

using nlohmann::json;

std::string slurp(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::invalid_argument("cannot open " + path);
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

json load_json(const std::string& path) {
  try {
    return json::parse(slurp(path));
  } catch (const json::exception& e) {
    throw std::invalid_argument(path + ": " + e.what());
  }
}

// Write through a same-directory temp file so readers never see a partial
// file, then rename into place.
void write_atomic(const std::string& path, const std::string& text) {
  namespace fs = std::filesystem;
  const fs::path p(path);
  const fs::path dir = p.parent_path().empty() ? fs::path(".") : p.parent_path();
  const fs::path tmp =
      dir / (p.filename().string() + ".tmp" + std::to_string(::getpid()));
  {
    std::ofstream f(tmp);
    f << text;
    if (!f) throw std::runtime_error("write failed: " + tmp.string());
  }
  fs::rename(tmp, p);
}

void emit(const std::string& text, const std::string& out_path) {
  if (out_path.empty())
    std::fputs(text.c_str(), stdout);
  else
    write_atomic(out_path, text);
}

std::vector<double> parse_list(const std::string& s) {
  std::vector<double> v;
  std::stringstream ss(s);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    if (tok.empty()) continue;
    std::size_t used = 0;
    double x = std::stod(tok, &used);
    if (used != tok.size())
      throw std::invalid_argument("bad number in list: " + tok);
    v.push_back(x);
  }
  if (v.empty()) throw std::invalid_argument("empty list: " + s);
  return v;
}

prl::Vec parse_vec(const std::string& s) { return parse_list(s); }

std::string num(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.12g", v);
  return buf;
}

const char* kind_name(prl::EstimatorKind k) {
  return k == prl::EstimatorKind::Analytic ? "analytic" : "monte_carlo";
}

json estimate_json(const prl::Estimate& e) {
  return {{"value", e.value}, {"estimator", kind_name(e.kind)}, {"stderr", e.se}};
}

struct InstanceRefs {
  prl::Generated inst;

  const prl::HardSet& set(const std::string& key) const {
    auto it = inst.sets.find(key);
    if (it == inst.sets.end())
      throw std::invalid_argument("instance has no set named '" + key + "'");
    return it->second;
  }
  const prl::SoftClassifier& soft(const std::string& key) const {
    auto it = inst.soft.find(key);
    if (it == inst.soft.end())
      throw std::invalid_argument("instance has no classifier named '" + key +
                                  "'");
    return it->second;
  }
};

InstanceRefs load_instance(const std::string& path) {
  return {prl::Generated::from_json(load_json(path))};
}

// ---------------------------------------------------------------- generate

struct GenerateArgs {
  std::string name;
  std::string params = "{}";
  std::uint64_t seed = 0;
  std::string out;
};

int cmd_generate(const GenerateArgs& a) {
  json params;
  try {
    params = json::parse(a.params);
  } catch (const json::exception& e) {
    throw std::invalid_argument(std::string("--params: ") + e.what());
  }
  prl::Generated g = prl::generate(a.name, params, a.seed);
  emit(g.to_json().dump(2) + "\n", a.out);
  return 0;
}

// -------------------------------------------------------------------- eval

struct EvalArgs {
  std::string instance;
  std::string functional;
  std::string set_key;
  std::string soft_key;
  std::string set_file;
  std::string model_file;
  std::string psi = "identity";
  double p = 0.1;
  double radius = 0.0;
  int mc_samples = 10000;
  int tv_levels = 64;
  bool force_mc = false;
  std::uint64_t seed = 0;
  std::string format = "json";
  std::string out;
};

int cmd_eval(const EvalArgs& a) {
  InstanceRefs ref = load_instance(a.instance);
  const prl::LabeledDataset& ds = ref.inst.dataset;
  const prl::PerturbationModel& pm = ref.inst.pm;

  prl::EstimatorConfig cfg;
  cfg.mc_samples = a.mc_samples;
  cfg.tv_levels = a.tv_levels;
  cfg.seed = a.seed;
  if (a.force_mc) cfg.mode = prl::EstimatorMode::ForceMc;

  std::optional<prl::HardSet> A;
  if (!a.set_file.empty())
    A = prl::HardSet::from_json(load_json(a.set_file));
  else if (!a.set_key.empty())
    A = ref.set(a.set_key);

  std::optional<prl::SoftClassifier> u;
  if (!a.model_file.empty())
    u = prl::SoftClassifier::from_json(load_json(a.model_file));
  else if (!a.soft_key.empty())
    u = ref.soft(a.soft_key);

  const prl::PsiSpec psi = prl::PsiSpec::parse(a.psi);
  const std::string& fn = a.functional;

  auto need_set = [&]() -> const prl::HardSet& {
    if (!A) throw std::invalid_argument(fn + ": pass --set or --set-file");
    return *A;
  };
  auto need_soft = [&]() -> const prl::SoftClassifier& {
    if (!u) throw std::invalid_argument(fn + ": pass --soft or --model-file");
    return *u;
  };

  prl::RiskReport r;
  bool have_report = true;
  prl::Estimate est;
  bool used_psi = true;
  bool used_p = false;

  if (fn == "risk_std") {
    r = prl::risk_std(ds, need_set());
    used_psi = false;
  } else if (fn == "risk_adv") {
    r = prl::risk_adv(ds, pm, need_set(), cfg, a.radius);
    used_psi = false;
  } else if (fn == "risk_psi") {
    r = prl::risk_psi(ds, pm, need_set(), psi, cfg);
  } else if (fn == "probper_psi") {
    r = prl::probper_psi(ds, pm, need_set(), psi, cfg);
  } else if (fn == "probrisk_psi") {
    r = prl::probrisk_psi(ds, pm, need_set(), psi, cfg);
  } else if (fn == "probrisk_max") {
    est = prl::probrisk_psi_max_form(ds, pm, need_set(), psi, cfg);
    have_report = false;
  } else if (fn == "probrisk_cvar") {
    est = prl::probrisk_cvar_form(ds, pm, need_set(), a.p, cfg);
    have_report = false;
    used_psi = false;
    used_p = true;
  } else if (fn == "risk_std_soft") {
    r = prl::risk_std_soft(ds, need_soft());
    used_psi = false;
  } else if (fn == "srisk_psi") {
    r = prl::srisk_psi(ds, pm, need_soft(), psi, cfg);
  } else if (fn == "probj_psi") {
    r = prl::probj_psi(ds, pm, need_soft(), psi, cfg);
  } else if (fn == "probtv_psi") {
    r = prl::probtv_psi(ds, pm, need_soft(), psi, cfg);
  } else if (fn == "prob_srisk_psi") {
    r = prl::prob_srisk_psi(ds, pm, need_soft(), psi, cfg);
  } else {
    throw std::invalid_argument("unknown functional: " + fn);
  }

  json j = have_report ? r.to_json() : estimate_json(est);
  j["functional"] = fn;
  if (used_psi) j["psi"] = psi.name();
  if (used_p) j["p"] = a.p;

  if (a.format == "json") {
    emit(j.dump(2) + "\n", a.out);
  } else {
    std::string csv = "functional,value,std_part,per_part,estimator,stderr\n";
    csv += fn + "," + num(j["value"].get<double>()) + ",";
    csv += have_report ? num(r.std_part) + "," + num(r.per_part) : ",";
    csv += std::string(",") + j["estimator"].get<std::string>() + "," +
           num(j["stderr"].get<double>()) + "\n";
    emit(csv, a.out);
  }
  return 0;
}

// ----------------------------------------------------------------- sweep-p

struct SweepArgs {
  std::string instance;
  std::string levels = "0.9,0.5,0.1,0.01";
  std::string grid_key = "grid";
  double adv_eps = 0.0;
  std::uint64_t seed = 0;
  int anneal_restarts = 8;
  int anneal_iters = 20000;
  std::string format = "json";
  std::string out;
};

int cmd_sweep(const SweepArgs& a) {
  InstanceRefs ref = load_instance(a.instance);
  if (!ref.inst.meta.contains(a.grid_key))
    throw std::invalid_argument("instance meta has no grid '" + a.grid_key +
                                "'");
  const prl::GridSpec grid =
      prl::GridSpec::from_json(ref.inst.meta.at(a.grid_key));
  double eps = a.adv_eps;
  if (eps <= 0.0) {
    if (ref.inst.meta.contains("epsilon"))
      eps = ref.inst.meta.at("epsilon").get<double>();
    else
      eps = ref.inst.pm.support_radius();
  }

  prl::GridSearchOptions opts;
  opts.seed = a.seed;
  opts.anneal_restarts = a.anneal_restarts;
  opts.anneal_iters = a.anneal_iters;

  prl::InterpSweep sweep = prl::interpolation_sweep(
      ref.inst.dataset, ref.inst.pm, grid, parse_list(a.levels), eps, opts);

  if (a.format == "json") {
    json rows = json::array();
    for (const auto& row : sweep.rows) {
      std::string bits(row.bits.size(), '0');
      for (std::size_t i = 0; i < row.bits.size(); ++i)
        if (row.bits[i]) bits[i] = '1';
      rows.push_back({{"p", row.p},
                      {"min_value", row.min_value},
                      {"exhaustive", row.exhaustive},
                      {"bits", bits}});
    }
    json j{{"rows", rows},
           {"min_adv", sweep.min_adv},
           {"min_std", sweep.min_std},
           {"adv_eps", eps}};
    emit(j.dump(2) + "\n", a.out);
  } else {
    std::string csv = "p,min_value,exhaustive\n";
    for (const auto& row : sweep.rows)
      csv += num(row.p) + "," + num(row.min_value) + "," +
             (row.exhaustive ? "1" : "0") + "\n";
    csv += "adv," + num(sweep.min_adv) + ",\n";
    csv += "std," + num(sweep.min_std) + ",\n";
    emit(csv, a.out);
  }
  return 0;
}

// ------------------------------------------------------------- asymptotics

struct AsympArgs {
  std::string shape = "disk";
  std::string center = "0,0";
  double radius = 1.0;
  std::string normal = "1,0";
  double offset = 0.0;
  std::string psi = "identity";
  std::string profile = "uniform";
  std::string epsilons;
  double eps_lo = 0.02;
  double eps_hi = 0.5;
  int eps_count = 6;
  double rho0 = 1.0;
  double rho1 = 1.0;
  bool sigma_only = false;
  int radial_cells = 200;
  std::string format = "json";
  std::string out;
};

int cmd_asymptotics(const AsympArgs& a) {
  const prl::PsiSpec psi = prl::PsiSpec::parse(a.psi);
  prl::RadialProfile profile = a.profile == "cone"
                                   ? prl::RadialProfile::cone()
                                   : prl::RadialProfile::uniform_ball();
  if (a.profile != "uniform" && a.profile != "cone")
    throw std::invalid_argument("unknown profile: " + a.profile);
  const double sigma = prl::sigma_psi(psi, profile);

  if (a.sigma_only) {
    if (a.format == "json")
      emit(json{{"sigma", sigma}, {"psi", psi.name()}, {"profile", a.profile}}
               .dump(2) +
               "\n",
           a.out);
    else
      emit("sigma\n" + num(sigma) + "\n", a.out);
    return 0;
  }

  if (a.profile != "uniform")
    throw std::invalid_argument(
        "epsilon sweeps draw perturbations from the uniform ball; rerun with "
        "--profile uniform or pass --sigma-only");

  prl::SmoothSet2D set =
      a.shape == "disk"
          ? prl::SmoothSet2D::disk(parse_vec(a.center), a.radius)
          : prl::SmoothSet2D::half_plane(parse_vec(a.normal), a.offset);
  if (a.shape != "disk" && a.shape != "halfplane")
    throw std::invalid_argument("unknown shape: " + a.shape);

  std::vector<double> eps;
  if (!a.epsilons.empty()) {
    eps = parse_list(a.epsilons);
  } else {
    if (a.eps_count < 1 || !(a.eps_lo > 0.0) || !(a.eps_hi >= a.eps_lo))
      throw std::invalid_argument("bad epsilon range");
    // geometric ladder from hi down to lo
    for (int i = 0; i < a.eps_count; ++i) {
      double t = a.eps_count == 1
                     ? 0.0
                     : double(i) / double(a.eps_count - 1);
      eps.push_back(a.eps_hi * std::pow(a.eps_lo / a.eps_hi, t));
    }
  }

  prl::SweepOptions opts;
  opts.radial_cells = a.radial_cells;
  const prl::DensityField field = prl::DensityField::constant(a.rho0, a.rho1);
  const std::vector<prl::SweepRow> rows =
      prl::epsilon_sweep(set, field, psi, eps, opts);

  if (a.format == "csv") {
    emit(prl::sweep_csv(rows), a.out);
  } else {
    json jr = json::array();
    for (const auto& r : rows)
      jr.push_back({{"epsilon", r.epsilon},
                    {"scaled_per", r.scaled_per},
                    {"limit", r.limit},
                    {"rel_error", r.rel_error}});
    json j{{"sigma", sigma},
           {"boundary_integral", prl::boundary_integral(set, field, opts)},
           {"psi", psi.name()},
           {"rows", jr}};
    emit(j.dump(2) + "\n", a.out);
  }
  return 0;
}

// ------------------------------------------------------------------- train

struct TrainArgs {
  std::string instance;
  std::string model_file;
  int mlp_hidden = 0;
  double p = 0.1;
  int draws = 20;
  int alpha_steps = 5;
  double eta_alpha = 1.0;
  double eta = 0.1;
  int batch = 16;
  int epochs = 50;
  std::string optimizer = "momentum";
  double momentum = 0.9;
  std::string variant = "modified";
  std::string loss = "bce";
  std::string probacc = "0.1,0.05,0.01";
  int probacc_samples = 100;
  std::uint64_t seed = 0;
  std::string format = "json";
  std::string out;
};

json epoch_json(const prl::EpochStats& e, const std::vector<double>& levels) {
  json pa = json::object();
  for (std::size_t i = 0; i < levels.size() && i < e.prob_acc.size(); ++i)
    pa[num(levels[i])] = e.prob_acc[i];
  return {{"epoch", e.epoch},
          {"objective", e.objective},
          {"clean_acc", e.clean_acc},
          {"prob_acc", pa},
          {"adv_surrogate", e.adv_surrogate},
          {"cvar_branch", e.cvar_branch},
          {"std_branch", e.std_branch},
          {"alpha_cap_hits", e.alpha_cap_hits}};
}

int cmd_train(const TrainArgs& a) {
  InstanceRefs ref = load_instance(a.instance);
  const int d = ref.inst.dataset.dim();

  prl::SoftClassifier u0 = [&] {
    if (!a.model_file.empty())
      return prl::SoftClassifier::from_json(load_json(a.model_file));
    if (a.mlp_hidden > 0) {
      const std::size_t need =
          std::size_t(a.mlp_hidden) * d + 2u * a.mlp_hidden + 1u;
      prl::Vec params(need);
      auto rng = prl::RngStream{a.seed, 0x696E6974ull}.rng();
      for (double& v : params) v = 0.5 * rng.normal();
      return prl::SoftClassifier::mlp1(d, a.mlp_hidden, std::move(params));
    }
    return prl::SoftClassifier::linear_sigmoid(prl::Vec(d, 0.0), 0.0);
  }();

  prl::TrainConfig cfg;
  cfg.p = a.p;
  cfg.draws = a.draws;
  cfg.alpha_steps = a.alpha_steps;
  cfg.eta_alpha = a.eta_alpha;
  cfg.eta = a.eta;
  cfg.batch = a.batch;
  cfg.epochs = a.epochs;
  cfg.momentum = a.momentum;
  cfg.probacc_samples = a.probacc_samples;
  cfg.probacc_levels = parse_list(a.probacc);
  cfg.seed = a.seed;
  if (a.optimizer == "sgd")
    cfg.optimizer = prl::OptimizerKind::Sgd;
  else if (a.optimizer != "momentum")
    throw std::invalid_argument("unknown optimizer: " + a.optimizer);
  if (a.variant == "original")
    cfg.variant = prl::TrainVariant::Original;
  else if (a.variant != "modified")
    throw std::invalid_argument("unknown variant: " + a.variant);
  if (a.loss == "abs")
    cfg.loss = prl::LossKind::Abs;
  else if (a.loss != "bce")
    throw std::invalid_argument("unknown loss: " + a.loss);

  prl::TrainResult res = prl::train(ref.inst.dataset, u0, ref.inst.pm, cfg);

  if (a.format == "json") {
    json hist = json::array();
    for (const auto& e : res.epochs)
      hist.push_back(epoch_json(e, cfg.probacc_levels));
    emit(json{{"model", res.model.to_json()}, {"history", hist}}.dump(2) + "\n",
         a.out);
  } else {
    std::string csv = "epoch,objective,clean_acc,adv_surrogate";
    for (double lv : cfg.probacc_levels) csv += ",prob_acc@" + num(lv);
    csv += ",cvar_branch,std_branch,alpha_cap_hits\n";
    for (const auto& e : res.epochs) {
      csv += std::to_string(e.epoch) + "," + num(e.objective) + "," +
             num(e.clean_acc) + "," + num(e.adv_surrogate);
      for (double v : e.prob_acc) csv += "," + num(v);
      csv += "," + std::to_string(e.cvar_branch) + "," +
             std::to_string(e.std_branch) + "," +
             std::to_string(e.alpha_cap_hits) + "\n";
    }
    emit(csv, a.out);
  }
  return 0;
}

// -------------------------------------------------------------- patho-scan

struct PathoArgs {
  std::string instance;
  std::string set_key;
  std::string soft_key;
  std::string model_file;
  double q = 0.9;
  int samples = 400;
  std::uint64_t seed = 0;
  std::string format = "json";
  std::string out;
};

int cmd_patho(const PathoArgs& a) {
  InstanceRefs ref = load_instance(a.instance);

  prl::Predictor predict;
  if (!a.set_key.empty()) {
    predict = prl::predictor_from(ref.set(a.set_key));
  } else if (!a.soft_key.empty()) {
    predict = prl::predictor_from(ref.soft(a.soft_key));
  } else if (!a.model_file.empty()) {
    predict =
        prl::predictor_from(prl::SoftClassifier::from_json(load_json(a.model_file)));
  } else {
    throw std::invalid_argument("pass --set, --soft, or --model-file");
  }

  prl::PathoReport rep =
      prl::patho_scan(ref.inst.dataset, predict, ref.inst.pm, a.q, a.samples,
                      prl::RngStream{a.seed, 0x70617468ull});

  if (a.format == "json") {
    json mis = json::array();
    for (std::size_t i = 0; i < rep.misclassified.size(); ++i)
      mis.push_back({{"index", rep.misclassified[i]},
                     {"correct_fraction", rep.correct_fraction[i]}});
    json j{{"misclassified", mis},
           {"flagged", rep.flagged},
           {"histogram", rep.histogram},
           {"q", a.q},
           {"samples", a.samples}};
    emit(j.dump(2) + "\n", a.out);
  } else {
    std::string csv = "bin_lo,bin_hi,count\n";
    for (int b = 0; b < 10; ++b)
      csv += num(b / 10.0) + "," + num((b + 1) / 10.0) + "," +
             std::to_string(rep.histogram[std::size_t(b)]) + "\n";
    emit(csv, a.out);
  }
  return 0;
}

// ------------------------------------------------------------------ oracle

struct OracleArgs {
  std::string which;
  std::string dist;
  double p = 0.1;
  double q = 0.5;
  std::string psi = "identity";
  std::string profile = "uniform";
  std::string out;
};

std::vector<prl::WeightedValue> parse_dist(const std::string& s) {
  std::vector<prl::WeightedValue> d;
  std::stringstream ss(s);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    auto colon = tok.find(':');
    if (colon == std::string::npos)
      throw std::invalid_argument("--dist entries look like value:weight");
    d.push_back({std::stod(tok.substr(0, colon)),
                 std::stod(tok.substr(colon + 1))});
  }
  if (d.empty()) throw std::invalid_argument("--dist is empty");
  return d;
}

int cmd_oracle(const OracleArgs& a) {
  json j;
  if (a.which == "p_esssup") {
    j = {{"value", prl::p_esssup(parse_dist(a.dist), a.p)}};
  } else if (a.which == "cvar") {
    prl::CvarResult r = prl::cvar_full(parse_dist(a.dist), a.p);
    j = {{"value", r.value}, {"alpha", r.alpha}};
  } else if (a.which == "cvar_indicator") {
    j = {{"value", prl::cvar_indicator(a.q, a.p)}};
  } else if (a.which == "sigma_psi") {
    prl::RadialProfile profile = a.profile == "cone"
                                     ? prl::RadialProfile::cone()
                                     : prl::RadialProfile::uniform_ball();
    j = {{"value", prl::sigma_psi(prl::PsiSpec::parse(a.psi), profile)}};
  } else {
    throw std::invalid_argument("unknown oracle: " + a.which);
  }
  j["which"] = a.which;
  emit(j.dump(2) + "\n", a.out);
  return 0;
}

// -------------------------------------------------------------- properties

struct PropArgs {
  std::uint64_t seed = 0;
  int rounds = 20;
  std::string format = "text";
  std::string out;
};

int cmd_properties(const PropArgs& a) {
  const std::vector<prl::CheckResult> res =
      prl::run_property_suite(a.seed, a.rounds);
  if (a.format == "json") {
    json j = json::array();
    for (const auto& r : res)
      j.push_back({{"name", r.name}, {"passed", r.passed}, {"detail", r.detail}});
    emit(j.dump(2) + "\n", a.out);
  } else {
    std::string text;
    for (const auto& r : res) {
      text += r.passed ? "ok   " : "FAIL ";
      text += r.name;
      if (!r.passed) text += ": " + r.detail;
      text += "\n";
    }
    emit(text, a.out);
  }
  return prl::all_passed(res) ? 0 : 1;
}

// --------------------------------------------------------------- dispatch

int dispatch(const std::vector<std::string>& args);

// Replays a subcommand from {"command": ..., "args": {...}}. Values become
// long options, so the config schema is exactly the CLI surface and unknown
// keys are rejected by the same parser.
int cmd_run(const std::string& config_path) {
  const json cfg = load_json(config_path);
  if (!cfg.is_object() || !cfg.contains("command") ||
      !cfg.at("command").is_string())
    throw std::invalid_argument("config needs a string 'command'");
  std::vector<std::string> args{cfg.at("command").get<std::string>()};
  const json a = cfg.value("args", json::object());
  if (!a.is_object())
    throw std::invalid_argument("config 'args' must be an object");
  for (const auto& [key, val] : a.items()) {
    if (val.is_boolean()) {
      if (val.get<bool>()) args.push_back("--" + key);
      continue;
    }
    args.push_back("--" + key);
    if (val.is_string()) {
      args.push_back(val.get<std::string>());
    } else if (val.is_number()) {
      args.push_back(num(val.get<double>()));
    } else if (val.is_array()) {
      std::string s;
      for (const auto& e : val) {
        if (!s.empty()) s += ",";
        s += num(e.get<double>());
      }
      args.push_back(s);
    } else {
      throw std::invalid_argument("config key '" + key +
                                  "' has an unsupported type");
    }
  }
  for (const auto& [key, val] : cfg.items())
    if (key != "command" && key != "args")
      throw std::invalid_argument("unknown config key '" + key + "'");
  return dispatch(args);
}

int dispatch(const std::vector<std::string>& args) {
  CLI::App app{"probabilistically robust learning toolkit"};
  app.require_subcommand(1);

  GenerateArgs ga;
  auto* gen = app.add_subcommand("generate", "emit a synthetic instance");
  gen->add_option("--name", ga.name, "instance family")
      ->required()
      ->check(CLI::IsMember(prl::generator_names()));
  gen->add_option("--params", ga.params, "generator parameters, JSON object");
  gen->add_option("--seed", ga.seed, "rng seed");
  gen->add_option("--out", ga.out, "output path (default stdout)");

  EvalArgs ea;
  auto* ev = app.add_subcommand("eval", "evaluate a risk functional");
  ev->add_option("--instance", ea.instance, "instance JSON path")->required();
  ev->add_option("--functional", ea.functional,
                 "risk_std|risk_adv|risk_psi|probper_psi|probrisk_psi|"
                 "probrisk_max|probrisk_cvar|risk_std_soft|srisk_psi|"
                 "probj_psi|probtv_psi|prob_srisk_psi")
      ->required();
  ev->add_option("--set", ea.set_key, "hard set key in the instance");
  ev->add_option("--set-file", ea.set_file, "hard set JSON path");
  ev->add_option("--soft", ea.soft_key, "classifier key in the instance");
  ev->add_option("--model-file", ea.model_file, "classifier JSON path");
  ev->add_option("--psi", ea.psi,
                 "identity|esssup_zero|indicator_gt:P|cvar_ramp:P|piecewise:...");
  ev->add_option("--p", ea.p, "tail level for probrisk_cvar");
  ev->add_option("--radius", ea.radius,
                 "fattening radius for risk_adv (default: model support)");
  ev->add_option("--mc-samples", ea.mc_samples, "Monte Carlo draws per mass");
  ev->add_option("--tv-levels", ea.tv_levels, "layer-cake quadrature levels");
  ev->add_flag("--force-mc", ea.force_mc, "skip analytic mass shortcuts");
  ev->add_option("--seed", ea.seed, "estimator seed");
  ev->add_option("--format", ea.format)->check(CLI::IsMember({"json", "csv"}));
  ev->add_option("--out", ea.out, "output path (default stdout)");

  SweepArgs sa;
  auto* sw = app.add_subcommand(
      "sweep-p", "minimize grid masks across CVaR tail levels");
  sw->add_option("--instance", sa.instance, "instance JSON path")->required();
  sw->add_option("--levels", sa.levels, "comma list of tail levels");
  sw->add_option("--grid-key", sa.grid_key, "meta key holding the mask grid");
  sw->add_option("--adv-eps", sa.adv_eps,
                 "fattening radius (default: meta epsilon)");
  sw->add_option("--seed", sa.seed, "annealer seed");
  sw->add_option("--anneal-restarts", sa.anneal_restarts);
  sw->add_option("--anneal-iters", sa.anneal_iters);
  sw->add_option("--format", sa.format)->check(CLI::IsMember({"json", "csv"}));
  sw->add_option("--out", sa.out, "output path (default stdout)");

  AsympArgs aa;
  auto* as = app.add_subcommand("asymptotics",
                                "small-radius perimeter scaling");
  as->add_option("--shape", aa.shape)->check(CLI::IsMember({"disk", "halfplane"}));
  as->add_option("--center", aa.center, "disk center 'x,y'");
  as->add_option("--radius", aa.radius, "disk radius");
  as->add_option("--normal", aa.normal, "half-plane normal 'x,y'");
  as->add_option("--offset", aa.offset, "half-plane offset");
  as->add_option("--psi", aa.psi, "psi spec");
  as->add_option("--profile", aa.profile, "uniform|cone (sigma only for cone)");
  as->add_option("--epsilons", aa.epsilons, "explicit comma list of radii");
  as->add_option("--eps-lo", aa.eps_lo, "smallest radius");
  as->add_option("--eps-hi", aa.eps_hi, "largest radius");
  as->add_option("--eps-count", aa.eps_count, "geometric ladder length");
  as->add_option("--rho0", aa.rho0, "label-0 density");
  as->add_option("--rho1", aa.rho1, "label-1 density");
  as->add_flag("--sigma-only", aa.sigma_only, "print the scaling constant");
  as->add_option("--radial-cells", aa.radial_cells, "collar resolution");
  as->add_option("--format", aa.format)->check(CLI::IsMember({"json", "csv"}));
  as->add_option("--out", aa.out, "output path (default stdout)");

  TrainArgs ta;
  auto* tr = app.add_subcommand("train", "CVaR stochastic training");
  tr->add_option("--instance", ta.instance, "instance JSON path")->required();
  tr->add_option("--model-file", ta.model_file, "warm-start classifier JSON");
  tr->add_option("--mlp-hidden", ta.mlp_hidden,
                 "fresh one-layer net of this width (default: linear)");
  tr->add_option("--p", ta.p, "CVaR tail level");
  tr->add_option("--draws", ta.draws, "perturbations per sample");
  tr->add_option("--alpha-steps", ta.alpha_steps, "inner subgradient steps");
  tr->add_option("--eta-alpha", ta.eta_alpha, "inner step size");
  tr->add_option("--eta", ta.eta, "model step size");
  tr->add_option("--batch", ta.batch);
  tr->add_option("--epochs", ta.epochs);
  tr->add_option("--optimizer", ta.optimizer)
      ->check(CLI::IsMember({"sgd", "momentum"}));
  tr->add_option("--momentum", ta.momentum);
  tr->add_option("--variant", ta.variant)
      ->check(CLI::IsMember({"original", "modified"}));
  tr->add_option("--loss", ta.loss)->check(CLI::IsMember({"bce", "abs"}));
  tr->add_option("--probacc", ta.probacc, "accuracy levels, comma list");
  tr->add_option("--probacc-samples", ta.probacc_samples);
  tr->add_option("--seed", ta.seed);
  tr->add_option("--format", ta.format)->check(CLI::IsMember({"json", "csv"}));
  tr->add_option("--out", ta.out, "output path (default stdout)");

  PathoArgs pa;
  auto* ps = app.add_subcommand("patho-scan",
                                "find misclassified points whose "
                                "perturbations are mostly classified right");
  ps->add_option("--instance", pa.instance, "instance JSON path")->required();
  ps->add_option("--set", pa.set_key, "hard set key");
  ps->add_option("--soft", pa.soft_key, "classifier key");
  ps->add_option("--model-file", pa.model_file, "classifier JSON path");
  ps->add_option("--q", pa.q, "flag threshold on the correct fraction");
  ps->add_option("--samples", pa.samples, "draws per point");
  ps->add_option("--seed", pa.seed);
  ps->add_option("--format", pa.format)->check(CLI::IsMember({"json", "csv"}));
  ps->add_option("--out", pa.out, "output path (default stdout)");

  OracleArgs oa;
  auto* oc = app.add_subcommand("oracle", "closed-form reference values");
  oc->add_option("--which", oa.which,
                 "p_esssup|cvar|cvar_indicator|sigma_psi")
      ->required();
  oc->add_option("--dist", oa.dist, "weighted values 'v:w,v:w,...'");
  oc->add_option("--p", oa.p, "tail level");
  oc->add_option("--q", oa.q, "indicator mass");
  oc->add_option("--psi", oa.psi, "psi spec for sigma_psi");
  oc->add_option("--profile", oa.profile, "uniform|cone");
  oc->add_option("--out", oa.out, "output path (default stdout)");

  PropArgs pra;
  auto* pr = app.add_subcommand("properties", "randomized invariant checks");
  pr->add_option("--seed", pra.seed);
  pr->add_option("--rounds", pra.rounds, "instances per check");
  pr->add_option("--format", pra.format)
      ->check(CLI::IsMember({"text", "json"}));
  pr->add_option("--out", pra.out, "output path (default stdout)");

  std::string config_path;
  auto* rn = app.add_subcommand("run", "replay a subcommand from a config");
  rn->add_option("--config", config_path, "JSON config path")->required();

  // CLI11's vector overload consumes arguments from the back.
  std::vector<std::string> rev(args.rbegin(), args.rend());
  try {
    app.parse(rev);
  } catch (const CLI::ParseError& e) {
    // prints help for -h / --help (exit code 0) or the parse error
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  if (*gen) return cmd_generate(ga);
  if (*ev) return cmd_eval(ea);
  if (*sw) return cmd_sweep(sa);
  if (*as) return cmd_asymptotics(aa);
  if (*tr) return cmd_train(ta);
  if (*ps) return cmd_patho(pa);
  if (*oc) return cmd_oracle(oa);
  if (*pr) return cmd_properties(pra);
  if (*rn) return cmd_run(config_path);
  return 2;
}

}  // namespace

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  try {
    return dispatch(args);
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const nlohmann::json::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "failed: " << e.what() << "\n";
    return 1;
  }
}
