#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <limits>
#include <map>
#include <numbers>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "blobflow/diagnostics.hpp"
#include "blobflow/dynamics.hpp"
#include "blobflow/ensemble.hpp"
#include "blobflow/error.hpp"
#include "blobflow/fit.hpp"
#include "blobflow/integrator.hpp"
#include "blobflow/metrics.hpp"
#include "blobflow/reference.hpp"

namespace blobflow::scenario {

using json = nlohmann::json;

/// One term of the initial density: weight * profile(tau, x - center).
struct Component {
  double weight = 1.0;
  std::vector<double> center;
  std::string profile = "heat";  // heat | barenblatt
  double tau = 0.0625;
  std::optional<double> m;  // barenblatt exponent; defaults to the scenario m
};

struct InitialSpec {
  std::string profile = "heat";  // heat | barenblatt | sum
  double tau = 0.0625;
  std::optional<double> m;
  std::vector<Component> components;
  bool normalize = false;
  double total_mass = 1.0;
  bool cell_quadrature = false;
};

struct ScenarioConfig {
  std::string name = "scenario";
  int dimension = 1;
  double m = 1.0;
  std::string drift = "none";        // none | quadratic
  std::string interaction = "none";  // none | log | newtonian
  double chi = 0.0;
  std::optional<double> interaction_epsilon;

  InitialSpec initial;

  double h = 0.02;
  double R = 2.5;
  double epsilon_p = 0.01;
  std::optional<double> epsilon;

  std::string scheme = "rk45";  // rk45 | rk4
  double rel_tol = 1e-6;
  double abs_tol = 1e-9;
  double dt_init = 1e-4;
  std::optional<double> dt_max;
  double dt = 1e-3;
  double t_final = 0.05;
  std::vector<double> record_times;

  std::vector<std::string> metrics;  // w2 | l1 | linf
  std::string reference = "auto";    // auto | none | self_similar | fp_steady_state
  std::optional<double> metric_h;
  std::optional<double> metric_R;
  std::optional<double> w2_grid_h;
  double w2_threshold = 1e-12;

  std::vector<std::string> observables;  // energy | dissipation | second_moment | nonlocal_sobolev | bv_eps_norm
  double quadrature_fraction = 0.25;

  bool write_densities = true;
  std::optional<double> density_h;

  bool long_running = false;
  std::string notes;

  double resolved_epsilon() const { return epsilon ? *epsilon : epsilon_from_spacing(h, epsilon_p); }
  double resolved_chi() const { return interaction == "newtonian" ? 1.0 / (4.0 * std::numbers::pi) : chi; }

  void validate() const;
  json to_json() const;
  static ScenarioConfig from_json(const json& j);
};

namespace detail {

inline void require(bool ok, const std::string& field, const std::string& msg) {
  if (!ok) throw ConfigError(field, msg);
}

inline bool one_of(const std::string& v, std::initializer_list<const char*> allowed) {
  for (const char* a : allowed)
    if (v == a) return true;
  return false;
}

inline std::string joined(std::initializer_list<const char*> allowed) {
  std::string s;
  for (const char* a : allowed) s += (s.empty() ? "" : ", ") + std::string(a);
  return s;
}

inline void check_keys(const json& j, const std::string& where, std::initializer_list<const char*> allowed) {
  require(j.is_object(), where.empty() ? "config" : where, "expected an object");
  for (const auto& [k, v] : j.items()) {
    bool ok = false;
    for (const char* a : allowed) ok = ok || k == a;
    require(ok, where.empty() ? k : where + "." + k, "unknown field (allowed: " + joined(allowed) + ")");
  }
}

template <typename T>
void read(const json& j, const char* key, T& out, const std::string& field) {
  if (!j.contains(key) || j.at(key).is_null()) return;
  try {
    out = j.at(key).get<T>();
  } catch (const json::exception&) {
    throw ConfigError(field, "has the wrong type");
  }
}

template <typename T>
void read_opt(const json& j, const char* key, std::optional<T>& out, const std::string& field) {
  if (!j.contains(key) || j.at(key).is_null()) return;
  T v{};
  read(j, key, v, field);
  out = v;
}

template <typename T>
json opt(const std::optional<T>& v) {
  return v ? json(*v) : json(nullptr);
}

}  // namespace detail

inline void ScenarioConfig::validate() const {
  using detail::require;
  require(!name.empty(), "name", "must not be empty");
  require(dimension == 1 || dimension == 2, "dimension", "must be 1 or 2");
  require(std::isfinite(m) && m >= 1.0, "m", "diffusion exponent must satisfy m >= 1");
  require(detail::one_of(drift, {"none", "quadratic"}), "drift", "must be none or quadratic");
  require(detail::one_of(interaction, {"none", "log", "newtonian"}), "interaction.type",
          "must be none, log or newtonian");
  require(interaction != "newtonian" || dimension == 2, "interaction.type", "newtonian requires dimension 2");
  require(std::isfinite(chi), "interaction.chi", "must be finite");
  require(!interaction_epsilon || *interaction_epsilon > 0.0, "interaction.epsilon", "must be positive");

  require(detail::one_of(initial.profile, {"heat", "barenblatt", "sum"}), "initial.profile",
          "must be heat, barenblatt or sum");
  auto check_profile = [&](const std::string& field, const std::string& profile, double tau,
                           const std::optional<double>& pm) {
    require(detail::one_of(profile, {"heat", "barenblatt"}), field + ".profile", "must be heat or barenblatt");
    require(std::isfinite(tau) && tau > 0.0, field + ".tau", "must be positive");
    if (profile == "barenblatt") {
      const double bm = pm.value_or(m);
      require(bm > 1.0, field + ".m", "barenblatt profiles need m > 1");
    }
  };
  if (initial.profile == "sum") {
    require(!initial.components.empty(), "initial.components", "sum needs at least one component");
    for (std::size_t k = 0; k < initial.components.size(); ++k) {
      const auto& c = initial.components[k];
      const std::string f = "initial.components[" + std::to_string(k) + "]";
      check_profile(f, c.profile, c.tau, c.m);
      require(std::isfinite(c.weight) && c.weight >= 0.0, f + ".weight", "must be nonnegative");
      require(c.center.empty() || static_cast<int>(c.center.size()) == dimension, f + ".center",
              "must have one coordinate per dimension");
    }
  } else {
    check_profile("initial", initial.profile, initial.tau, initial.m);
  }
  require(initial.total_mass > 0.0, "initial.total_mass", "must be positive");

  require(std::isfinite(h) && h > 0.0, "grid.h", "must be positive");
  require(std::isfinite(R) && R > 0.0, "grid.R", "must be positive");
  require(epsilon_p > 0.0 && epsilon_p < 1.0, "epsilon.p", "must lie in (0, 1)");
  require(!epsilon || *epsilon > 0.0, "epsilon.value", "must be positive");
  require(epsilon || h < 1.0, "grid.h", "the rule eps = h^(1-p) needs h < 1 so that eps > h");

  require(detail::one_of(scheme, {"rk45", "rk4"}), "integrator.scheme", "must be rk45 or rk4");
  require(t_final > 0.0 && std::isfinite(t_final), "integrator.t_final", "must be positive");
  require(rel_tol > 0.0 && abs_tol > 0.0, "integrator.rel_tol", "tolerances must be positive");
  require(dt_init > 0.0, "integrator.dt_init", "must be positive");
  require(!dt_max || *dt_max > 0.0, "integrator.dt_max", "must be positive");
  require(dt > 0.0, "integrator.dt", "must be positive");
  for (double t : record_times)
    require(t >= 0.0 && t <= t_final, "integrator.record_times", "must lie in [0, t_final]");
  require(std::is_sorted(record_times.begin(), record_times.end()), "integrator.record_times", "must be sorted");

  for (const auto& k : metrics) require(detail::one_of(k, {"w2", "l1", "linf"}), "metrics.compute", "unknown metric " + k);
  require(detail::one_of(reference, {"auto", "none", "self_similar", "fp_steady_state"}), "metrics.reference",
          "must be auto, none, self_similar or fp_steady_state");
  require(!metric_h || *metric_h > 0.0, "metrics.grid_h", "must be positive");
  require(!metric_R || *metric_R > 0.0, "metrics.grid_R", "must be positive");
  require(!w2_grid_h || *w2_grid_h > 0.0, "metrics.w2_grid_h", "must be positive");
  require(w2_threshold >= 0.0 && w2_threshold < 1.0, "metrics.w2_threshold", "must lie in [0, 1)");
  for (const auto& o : observables)
    require(detail::one_of(o, {"energy", "dissipation", "second_moment", "nonlocal_sobolev", "bv_eps_norm"}),
            "diagnostics.observables", "unknown observable " + o);
  require(quadrature_fraction > 0.0 && quadrature_fraction <= 0.5, "diagnostics.quadrature_fraction",
          "must lie in (0, 0.5]");
  require(!density_h || *density_h > 0.0, "output.density_h", "must be positive");
}

inline json ScenarioConfig::to_json() const {
  json comps = json::array();
  for (const auto& c : initial.components)
    comps.push_back({{"weight", c.weight},
                     {"center", c.center},
                     {"profile", c.profile},
                     {"tau", c.tau},
                     {"m", detail::opt(c.m)}});
  return {
      {"name", name},
      {"dimension", dimension},
      {"m", m},
      {"drift", drift},
      {"interaction", {{"type", interaction}, {"chi", chi}, {"epsilon", detail::opt(interaction_epsilon)}}},
      {"initial",
       {{"profile", initial.profile},
        {"tau", initial.tau},
        {"m", detail::opt(initial.m)},
        {"components", comps},
        {"normalize", initial.normalize},
        {"total_mass", initial.total_mass},
        {"cell_quadrature", initial.cell_quadrature}}},
      {"grid", {{"h", h}, {"R", R}}},
      {"epsilon", {{"p", epsilon_p}, {"value", detail::opt(epsilon)}}},
      {"integrator",
       {{"scheme", scheme},
        {"rel_tol", rel_tol},
        {"abs_tol", abs_tol},
        {"dt_init", dt_init},
        {"dt_max", detail::opt(dt_max)},
        {"dt", dt},
        {"t_final", t_final},
        {"record_times", record_times}}},
      {"metrics",
       {{"compute", metrics},
        {"reference", reference},
        {"grid_h", detail::opt(metric_h)},
        {"grid_R", detail::opt(metric_R)},
        {"w2_grid_h", detail::opt(w2_grid_h)},
        {"w2_threshold", w2_threshold}}},
      {"diagnostics", {{"observables", observables}, {"quadrature_fraction", quadrature_fraction}}},
      {"output", {{"densities", write_densities}, {"density_h", detail::opt(density_h)}}},
      {"long_running", long_running},
      {"notes", notes},
  };
}

/// Accepts a config object, or a run manifest (whose "config" member is one).
inline ScenarioConfig ScenarioConfig::from_json(const json& in) {
  using detail::read;
  using detail::read_opt;
  if (in.is_object() && in.contains("config") && in.contains("derived")) return from_json(in.at("config"));
  detail::check_keys(in, "", {"name", "dimension", "m", "drift", "interaction", "initial", "grid", "epsilon",
                              "integrator", "metrics", "diagnostics", "output", "long_running", "notes"});
  ScenarioConfig c;
  read(in, "name", c.name, "name");
  read(in, "dimension", c.dimension, "dimension");
  read(in, "m", c.m, "m");
  read(in, "drift", c.drift, "drift");
  read(in, "long_running", c.long_running, "long_running");
  read(in, "notes", c.notes, "notes");
  if (in.contains("interaction")) {
    const auto& j = in.at("interaction");
    detail::check_keys(j, "interaction", {"type", "chi", "epsilon"});
    read(j, "type", c.interaction, "interaction.type");
    read(j, "chi", c.chi, "interaction.chi");
    read_opt(j, "epsilon", c.interaction_epsilon, "interaction.epsilon");
  }
  if (in.contains("initial")) {
    const auto& j = in.at("initial");
    detail::check_keys(j, "initial",
                       {"profile", "tau", "m", "components", "normalize", "total_mass", "cell_quadrature"});
    read(j, "profile", c.initial.profile, "initial.profile");
    read(j, "tau", c.initial.tau, "initial.tau");
    read_opt(j, "m", c.initial.m, "initial.m");
    read(j, "normalize", c.initial.normalize, "initial.normalize");
    read(j, "total_mass", c.initial.total_mass, "initial.total_mass");
    read(j, "cell_quadrature", c.initial.cell_quadrature, "initial.cell_quadrature");
    if (j.contains("components")) {
      detail::require(j.at("components").is_array(), "initial.components", "must be an array");
      for (std::size_t k = 0; k < j.at("components").size(); ++k) {
        const auto& cj = j.at("components").at(k);
        const std::string f = "initial.components[" + std::to_string(k) + "]";
        detail::check_keys(cj, f, {"weight", "center", "profile", "tau", "m"});
        Component comp;
        read(cj, "weight", comp.weight, f + ".weight");
        read(cj, "center", comp.center, f + ".center");
        read(cj, "profile", comp.profile, f + ".profile");
        read(cj, "tau", comp.tau, f + ".tau");
        read_opt(cj, "m", comp.m, f + ".m");
        c.initial.components.push_back(comp);
      }
    }
  }
  if (in.contains("grid")) {
    const auto& j = in.at("grid");
    detail::check_keys(j, "grid", {"h", "R"});
    read(j, "h", c.h, "grid.h");
    read(j, "R", c.R, "grid.R");
  }
  if (in.contains("epsilon")) {
    const auto& j = in.at("epsilon");
    detail::check_keys(j, "epsilon", {"p", "value"});
    read(j, "p", c.epsilon_p, "epsilon.p");
    read_opt(j, "value", c.epsilon, "epsilon.value");
  }
  if (in.contains("integrator")) {
    const auto& j = in.at("integrator");
    detail::check_keys(j, "integrator",
                       {"scheme", "rel_tol", "abs_tol", "dt_init", "dt_max", "dt", "t_final", "record_times"});
    read(j, "scheme", c.scheme, "integrator.scheme");
    read(j, "rel_tol", c.rel_tol, "integrator.rel_tol");
    read(j, "abs_tol", c.abs_tol, "integrator.abs_tol");
    read(j, "dt_init", c.dt_init, "integrator.dt_init");
    read_opt(j, "dt_max", c.dt_max, "integrator.dt_max");
    read(j, "dt", c.dt, "integrator.dt");
    read(j, "t_final", c.t_final, "integrator.t_final");
    read(j, "record_times", c.record_times, "integrator.record_times");
  }
  if (in.contains("metrics")) {
    const auto& j = in.at("metrics");
    detail::check_keys(j, "metrics", {"compute", "reference", "grid_h", "grid_R", "w2_grid_h", "w2_threshold"});
    read(j, "compute", c.metrics, "metrics.compute");
    read(j, "reference", c.reference, "metrics.reference");
    read_opt(j, "grid_h", c.metric_h, "metrics.grid_h");
    read_opt(j, "grid_R", c.metric_R, "metrics.grid_R");
    read_opt(j, "w2_grid_h", c.w2_grid_h, "metrics.w2_grid_h");
    read(j, "w2_threshold", c.w2_threshold, "metrics.w2_threshold");
  }
  if (in.contains("diagnostics")) {
    const auto& j = in.at("diagnostics");
    detail::check_keys(j, "diagnostics", {"observables", "quadrature_fraction"});
    read(j, "observables", c.observables, "diagnostics.observables");
    read(j, "quadrature_fraction", c.quadrature_fraction, "diagnostics.quadrature_fraction");
  }
  if (in.contains("output")) {
    const auto& j = in.at("output");
    detail::check_keys(j, "output", {"densities", "density_h"});
    read(j, "densities", c.write_densities, "output.densities");
    read_opt(j, "density_h", c.density_h, "output.density_h");
  }
  c.validate();
  return c;
}

inline ScenarioConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config", "cannot open " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError("config", std::string("invalid JSON: ") + e.what());
  }
  return ScenarioConfig::from_json(j);
}

/// Errors against the reference solution at one output time. Absent values
/// were not requested.
struct ErrorRow {
  double t = 0.0;
  std::optional<double> w2, l1, linf;

  std::optional<double> get(const std::string& metric) const {
    if (metric == "w2") return w2;
    if (metric == "l1") return l1;
    if (metric == "linf") return linf;
    return std::nullopt;
  }
};

struct ScenarioReport {
  ScenarioConfig config;
  double epsilon = 0.0;
  std::size_t n_particles = 0;
  double total_mass = 0.0;
  std::string reference;  // resolved: none | self_similar | fp_steady_state
  bool blew_up = false;
  double t_reached = 0.0;
  std::string stop_reason;
  std::vector<DiagnosticsRow> diagnostics;
  std::vector<ErrorRow> errors;
  SeriesTable series;
  json manifest;
};

struct RunOptions {
  /// Output directory; nothing is written when empty.
  std::filesystem::path out_dir;
  /// When false, diagnostics rows carry t, second moment and particle count
  /// only; energy and dissipation are NaN. Each skipped row saves two O(N^2)
  /// passes.
  bool energy_diagnostics = true;
};

namespace detail {

inline std::string format_double(double v) {
  std::ostringstream os;
  os.imbue(std::locale::classic());
  os << std::setprecision(17) << v;
  return os.str();
}

/// Writes through a temporary file and renames it into place.
inline void write_atomically(const std::filesystem::path& path, const std::function<void(std::ostream&)>& body) {
  std::filesystem::create_directories(path.parent_path().empty() ? "." : path.parent_path());
  const auto tmp = path.string() + ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
    if (!os) throw NumericalError("cannot write " + tmp);
    os.imbue(std::locale::classic());
    body(os);
    if (!os) throw NumericalError("failed writing " + tmp);
  }
  std::filesystem::rename(tmp, path);
}

template <int D>
Vec<D> center_of(const std::vector<double>& c) {
  Vec<D> v{};
  for (int k = 0; k < D && k < static_cast<int>(c.size()); ++k) v[k] = c[k];
  return v;
}

template <int D>
double profile_value(const std::string& profile, double m, double tau, const Vec<D>& x) {
  return profile == "heat" ? reference::heat_kernel<D>(tau, x) : reference::barenblatt<D>(m, tau, x);
}

template <int D>
DensityFn<D> initial_density(const ScenarioConfig& c) {
  if (c.initial.profile != "sum") {
    const std::string prof = c.initial.profile;
    const double m = c.initial.m.value_or(c.m), tau = c.initial.tau;
    return [prof, m, tau](const Vec<D>& x) { return profile_value<D>(prof, m, tau, x); };
  }
  struct Term {
    double w;
    Vec<D> c;
    std::string profile;
    double m, tau;
  };
  std::vector<Term> terms;
  for (const auto& comp : c.initial.components)
    terms.push_back({comp.weight, center_of<D>(comp.center), comp.profile, comp.m.value_or(c.m), comp.tau});
  return [terms](const Vec<D>& x) {
    double s = 0.0;
    for (const auto& t : terms) s += t.w * profile_value<D>(t.profile, t.m, t.tau, x - t.c);
    return s;
  };
}

/// Which exact solution applies, if any.
inline std::string resolve_reference(const ScenarioConfig& c) {
  const bool free_flow = c.drift == "none" && c.interaction == "none";
  const bool single = c.initial.profile != "sum";
  const bool fundamental = single && ((c.initial.profile == "heat" && c.m == 1.0) ||
                                      (c.initial.profile == "barenblatt" && c.initial.m.value_or(c.m) == c.m));
  const bool self_similar = free_flow && fundamental && (!c.initial.normalize || c.initial.total_mass == 1.0);
  const bool fp = c.dimension == 2 && c.m == 2.0 && c.drift == "quadratic" && c.interaction == "none";
  if (c.reference == "none") return "none";
  if (c.reference == "self_similar") {
    require(self_similar, "metrics.reference",
            "self_similar needs V = W = none and a single heat (m = 1) or Barenblatt profile with the scenario m");
    return "self_similar";
  }
  if (c.reference == "fp_steady_state") {
    require(fp, "metrics.reference", "fp_steady_state needs dimension 2, m = 2, quadratic drift and no interaction");
    return "fp_steady_state";
  }
  if (self_similar) return "self_similar";
  if (fp) return "fp_steady_state";
  return "none";
}

template <int D>
DensityFn<D> exact_at(const ScenarioConfig& c, const std::string& ref, double t) {
  if (ref == "fp_steady_state") {
    if constexpr (D == 2) return [](const Vec<2>& x) { return reference::fp_steady_state(x); };
  }
  const double m = c.m, tau = c.initial.tau + t;
  return [m, tau](const Vec<D>& x) { return reference::fundamental_solution<D>(m, tau, x); };
}

/// Half-width of an interval holding all but a negligible part of the exact
/// solution's mass.
template <int D>
double exact_extent(const ScenarioConfig& c, const std::string& ref, double t) {
  if (ref == "fp_steady_state") return reference::barenblatt_support_radius(2.0, 0.25, 2) * 1.001;
  const double tau = c.initial.tau + t;
  if (c.m == 1.0) return 12.0 * std::sqrt(2.0 * tau);
  return reference::barenblatt_support_radius(c.m, tau, D) * 1.001;
}

template <int D>
ProblemSpec<D> problem_of(const ScenarioConfig& c) {
  ProblemSpec<D> p;
  p.m = c.m;
  const double eps = c.resolved_epsilon();
  p.mollifier = Mollifier<D>(eps);
  p.drift = c.drift == "quadratic" ? DriftPotential::quadratic() : DriftPotential::none();
  if (c.interaction != "none") {
    const double ie = c.interaction_epsilon.value_or(eps);
    if constexpr (D == 1) p.interaction = InteractionPotential<1>::log1d(c.resolved_chi(), ie);
    else p.interaction = InteractionPotential<2>::log2d(c.resolved_chi(), ie);
  }
  return p;
}

inline IntegratorConfig integrator_of(const ScenarioConfig& c) {
  IntegratorConfig ic;
  if (c.scheme == "rk4")
    ic.scheme = Rk4Fixed{c.dt};
  else
    ic.scheme = Rk45Adaptive{c.rel_tol, c.abs_tol, c.dt_init, c.dt_max.value_or(std::numeric_limits<double>::infinity())};
  ic.t_final = c.t_final;
  ic.record_times = c.record_times;
  return ic;
}

template <int D>
ErrorRow errors_at(const ScenarioConfig& c, const std::string& ref, const Snapshot<D>& s, const Mollifier<D>& moll) {
  ErrorRow row;
  row.t = s.t;
  const auto want = [&](const char* k) { return std::find(c.metrics.begin(), c.metrics.end(), k) != c.metrics.end(); };
  const auto exact = exact_at<D>(c, ref, s.t);
  if (want("l1") || want("linf")) {
    const GridSpec<D> g(c.metric_h.value_or(c.h), c.metric_R.value_or(c.R));
    const auto blob = sample_on_grid(s.ensemble, moll, g);
    const auto ex = GridField<D>::sample(g, exact);
    if (want("l1")) row.l1 = l1_error(blob, ex);
    if (want("linf")) row.linf = linf_error(blob, ex);
  }
  if (want("w2")) {
    W2Options opt;
    opt.normalize = true;
    if constexpr (D == 1) {
      const double L = exact_extent<1>(c, ref, s.t);
      const DensityQuantile q(exact, -L, L);
      row.w2 = w2_1d(measure_from_ensemble(s.ensemble), q, opt);
    } else {
      const GridSpec<2> g(c.w2_grid_h.value_or(c.metric_h.value_or(c.h)), c.metric_R.value_or(c.R));
      const auto blob = measure_from_field(sample_on_grid(s.ensemble, moll, g), c.w2_threshold);
      const auto ex = measure_from_field(GridField<2>::sample(g, exact), c.w2_threshold);
      row.w2 = w2_2d(blob, ex, opt);
    }
  }
  return row;
}

inline std::set<Observable> observables_of(const ScenarioConfig& c) {
  std::set<Observable> s;
  for (const auto& o : c.observables) {
    if (o == "energy") s.insert(Observable::energy);
    if (o == "dissipation") s.insert(Observable::dissipation);
    if (o == "second_moment") s.insert(Observable::second_moment);
    if (o == "nonlocal_sobolev") s.insert(Observable::nonlocal_sobolev);
    if (o == "bv_eps_norm") s.insert(Observable::bv_norm);
  }
  return s;
}

inline void write_errors_csv(std::ostream& os, const ScenarioConfig& c, const std::vector<ErrorRow>& rows) {
  os << "t";
  for (const auto& m : c.metrics) os << ',' << m;
  os << '\n';
  for (const auto& r : rows) {
    os << format_double(r.t);
    for (const auto& m : c.metrics) os << ',' << format_double(r.get(m).value_or(std::nan("")));
    os << '\n';
  }
}

template <int D>
ScenarioReport run_impl(const ScenarioConfig& c, const RunOptions& opt) {
  ScenarioReport rep;
  rep.config = c;
  rep.epsilon = c.resolved_epsilon();
  rep.reference = resolve_reference(c);
  const auto p = problem_of<D>(c);
  const GridSpec<D> grid(c.h, c.R);
  DiscretizeOptions dopt;
  dopt.normalize = c.initial.normalize;
  dopt.total_mass = c.initial.total_mass;
  dopt.cell_quadrature = c.initial.cell_quadrature;
  const auto e0 = discretize_density<D>(initial_density<D>(c), grid, dopt);
  rep.n_particles = e0.size();
  rep.total_mass = e0.total_mass();

  auto traj = integrate(e0, p, integrator_of(c), opt.energy_diagnostics);
  if (!opt.energy_diagnostics)
    for (const auto& s : traj.snapshots) {
      DiagnosticsRow row;
      row.t = s.t;
      row.energy = row.dissipation = std::numeric_limits<double>::quiet_NaN();
      row.second_moment = second_moment(s.ensemble);
      row.n_particles = s.ensemble.size();
      traj.diagnostics.push_back(row);
    }
  rep.blew_up = traj.blew_up;
  rep.t_reached = traj.t_reached;
  rep.stop_reason = traj.stop_reason;
  rep.diagnostics = traj.diagnostics;

  if (rep.reference != "none" && !c.metrics.empty())
    for (const auto& s : traj.snapshots) rep.errors.push_back(errors_at<D>(c, rep.reference, s, p.mollifier));
  const auto obs = observables_of(c);
  if (!obs.empty()) rep.series = assemble_series(traj, p, obs, c.quadrature_fraction);

  json files = json::array();
  json densities = json::array();
  if (!opt.out_dir.empty()) {
    const auto dir = opt.out_dir;
    write_atomically(dir / "diagnostics.csv", [&](std::ostream& os) { write_diagnostics_csv(os, traj.diagnostics); });
    files.push_back("diagnostics.csv");
    if (!rep.errors.empty()) {
      write_atomically(dir / "errors.csv", [&](std::ostream& os) { write_errors_csv(os, c, rep.errors); });
      files.push_back("errors.csv");
    }
    if (!obs.empty()) {
      write_atomically(dir / "series.csv", [&](std::ostream& os) { write_csv(os, rep.series); });
      files.push_back("series.csv");
    }
    if (c.write_densities) {
      const GridSpec<D> dg(c.density_h.value_or(c.h), c.R);
      for (std::size_t k = 0; k < traj.snapshots.size(); ++k) {
        char name[64];
        std::snprintf(name, sizeof name, "density_%04zu.csv", k);
        const auto f = sample_on_grid(traj.snapshots[k].ensemble, p.mollifier, dg);
        write_atomically(dir / name, [&](std::ostream& os) { write_csv(os, f, "density"); });
        densities.push_back({{"t", traj.snapshots[k].t}, {"file", name}});
        files.push_back(name);
      }
    }
  }
  rep.manifest = {{"config", c.to_json()},
                  {"derived",
                   {{"epsilon", rep.epsilon},
                    {"n_particles", rep.n_particles},
                    {"total_mass", rep.total_mass},
                    {"interaction_chi", c.resolved_chi()},
                    {"reference", rep.reference},
                    {"blew_up", rep.blew_up},
                    {"t_reached", rep.t_reached},
                    {"stop_reason", rep.stop_reason},
                    {"steps", traj.solver.steps},
                    {"rejected_steps", traj.solver.rejected},
                    {"rhs_evaluations", traj.solver.rhs_evaluations},
                    {"densities", densities},
                    {"files", files}}}};
  if (!opt.out_dir.empty())
    write_atomically(opt.out_dir / "manifest.json", [&](std::ostream& os) { os << rep.manifest.dump(2) << '\n'; });
  return rep;
}

}  // namespace detail

/// Discretizes the initial density, integrates, and measures errors and
/// diagnostics. Blow-up truncates the run and is reported, not raised.
inline ScenarioReport run_scenario(const ScenarioConfig& cfg, const RunOptions& opt = {}) {
  cfg.validate();
  return cfg.dimension == 1 ? detail::run_impl<1>(cfg, opt) : detail::run_impl<2>(cfg, opt);
}

struct SweepPoint {
  double h = 0.0;
  ErrorRow errors;
};

struct SweepReport {
  std::vector<SweepPoint> points;
  /// Least-squares slope of log(error) against log(h), per metric.
  std::map<std::string, LinearFit> slopes;
};

/// Computes the errors of one sweep point; the default runs the scenario.
using SweepRunner = std::function<ErrorRow(const ScenarioConfig&)>;

inline SweepReport convergence_sweep(const ScenarioConfig& base, const std::vector<double>& h_list, double t_eval,
                                     const std::filesystem::path& out_dir = {}, SweepRunner runner = {}) {
  detail::require(h_list.size() >= 3, "h", "a sweep needs at least three grid spacings");
  detail::require(t_eval > 0.0, "t", "evaluation time must be positive");
  detail::require(!base.metrics.empty(), "metrics.compute", "a sweep needs at least one metric");
  SweepReport rep;
  for (double h : h_list) {
    ScenarioConfig c = base;
    c.h = h;
    c.t_final = t_eval;
    c.record_times = {t_eval};
    c.write_densities = false;
    c.observables.clear();
    std::ostringstream hs;
    hs << h;
    try {
      c.validate();
      ErrorRow row;
      if (runner) {
        row = runner(c);
      } else {
        RunOptions ro;
        if (!out_dir.empty()) ro.out_dir = out_dir / ("h_" + hs.str());
        const auto r = run_scenario(c, ro);
        if (r.blew_up) throw NumericalError("run stopped early: " + r.stop_reason);
        if (r.reference == "none") throw ConfigError("metrics.reference", "no exact solution for this scenario");
        row = r.errors.back();
      }
      rep.points.push_back({h, row});
    } catch (const ConfigError& e) {
      throw ConfigError(e.field(), std::string("sweep failed at h = ") + hs.str() + ": " + e.what());
    } catch (const std::exception& e) {
      throw NumericalError(std::string("sweep failed at h = ") + hs.str() + ": " + e.what());
    }
  }
  for (const auto& m : base.metrics) {
    std::vector<double> hs, es;
    for (const auto& p : rep.points) {
      hs.push_back(p.h);
      es.push_back(p.errors.get(m).value_or(std::nan("")));
    }
    rep.slopes[m] = fit_loglog(hs, es);
  }
  if (!out_dir.empty()) {
    detail::write_atomically(out_dir / "sweep.csv", [&](std::ostream& os) {
      os << "h,epsilon";
      for (const auto& m : base.metrics) os << ',' << m;
      os << '\n';
      for (const auto& p : rep.points) {
        os << detail::format_double(p.h) << ',' << detail::format_double(epsilon_from_spacing(p.h, base.epsilon_p));
        for (const auto& m : base.metrics) os << ',' << detail::format_double(p.errors.get(m).value_or(std::nan("")));
        os << '\n';
      }
    });
    detail::write_atomically(out_dir / "slopes.csv", [&](std::ostream& os) {
      os << "metric,slope,r_squared\n";
      for (const auto& [m, f] : rep.slopes)
        os << m << ',' << detail::format_double(f.slope) << ',' << detail::format_double(f.r_squared) << '\n';
    });
  }
  return rep;
}

struct CriticalityRow {
  double mass = 0.0;
  double fitted_slope = 0.0;
  double reference_slope = 0.0;
  double r_squared = 0.0;
  std::size_t points = 0;
  bool blew_up = false;
};

/// Second-moment history M2(t) of one criticality run.
using MomentRunner = std::function<std::vector<DiagnosticsRow>(const ScenarioConfig&)>;

/// For each mass: rescale the initial data to that mass, run, and fit M2(t)
/// by least squares over all recorded times. The reference slope is the
/// virial value 4 M (1 - M / (8 pi)). The runs record t, M2 and N only.
inline std::vector<CriticalityRow> ks2d_criticality(const std::vector<double>& masses, const ScenarioConfig& base,
                                                    const std::filesystem::path& out_dir = {},
                                                    MomentRunner runner = {}) {
  detail::require(!masses.empty(), "mass", "at least one mass is required");
  for (double m : masses) detail::require(std::isfinite(m) && m > 0.0, "mass", "masses must be positive");
  detail::require(base.dimension == 2, "dimension", "criticality runs are two-dimensional");
  detail::require(base.m == 1.0, "m", "criticality runs use linear diffusion (m = 1)");
  detail::require(base.drift == "none", "drift", "criticality runs have no drift");
  detail::require(base.interaction == "newtonian" ||
                      (base.interaction == "log" && std::abs(base.chi - 1.0 / (4 * std::numbers::pi)) < 1e-12),
                  "interaction.type", "criticality runs use W = log|x| / (2 pi)");
  std::vector<CriticalityRow> rows;
  for (double mass : masses) {
    ScenarioConfig c = base;
    c.initial.normalize = true;
    c.initial.total_mass = mass;
    c.metrics.clear();
    std::vector<DiagnosticsRow> hist;
    CriticalityRow row;
    row.mass = mass;
    if (runner) {
      hist = runner(c);
    } else {
      RunOptions ro;
      ro.energy_diagnostics = false;
      if (!out_dir.empty()) {
        std::ostringstream ms;
        ms << "mass_" << std::setprecision(6) << mass / std::numbers::pi << "pi";
        ro.out_dir = out_dir / ms.str();
      }
      const auto r = run_scenario(c, ro);
      hist = r.diagnostics;
      row.blew_up = r.blew_up;
    }
    std::vector<double> t, m2;
    for (const auto& d : hist) {
      t.push_back(d.t);
      m2.push_back(d.second_moment);
    }
    const auto fit = fit_line(t, m2);
    row.fitted_slope = fit.slope;
    row.r_squared = fit.r_squared;
    row.points = t.size();
    row.reference_slope = reference::ks_second_moment_slope(mass, reference::KellerSegelVariant::classical_2d);
    rows.push_back(row);
  }
  if (!out_dir.empty())
    detail::write_atomically(out_dir / "criticality.csv", [&](std::ostream& os) {
      os << "mass,mass_over_pi,fitted_slope,reference_slope,r_squared,points,blew_up\n";
      for (const auto& r : rows)
        os << detail::format_double(r.mass) << ',' << detail::format_double(r.mass / std::numbers::pi) << ','
           << detail::format_double(r.fitted_slope) << ',' << detail::format_double(r.reference_slope) << ','
           << detail::format_double(r.r_squared) << ',' << r.points << ',' << (r.blew_up ? 1 : 0) << '\n';
    });
  return rows;
}

}  // namespace blobflow::scenario
