// frlab: batch front-end. Each subcommand reads a JSON config, writes
// report.json (plus spectrum.csv / diffeo.json where relevant) to --out and
// exits 0 on pass, 1 on a failed assertion, 2 on a config error, 3 on a
// numerical failure.

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "CLI11.hpp"
#include "frlab/invariance.hpp"
#include "frlab/metrics.hpp"
#include "frlab/moser.hpp"

extern "C" void openblas_set_num_threads(int);

using namespace frlab;
using nlohmann::json;

namespace {

constexpr int kSchema = 1;

enum Exit : int { pass = 0, assertion_failed = 1, config_error = 2, numerical_error = 3 };

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// A JSON object whose keys must all be consumed; leftovers are an error.
class Section {
 public:
  Section(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError(where() + " must be an object");
  }

  bool has(const std::string& key) const { return j_.contains(key); }

  template <class T>
  T req(const std::string& key) {
    if (!j_.contains(key)) throw ConfigError("missing field " + where(key));
    return get<T>(key);
  }

  template <class T>
  T opt(const std::string& key, T fallback) {
    return j_.contains(key) ? get<T>(key) : fallback;
  }

  Section sub(const std::string& key) {
    if (!j_.contains(key)) throw ConfigError("missing field " + where(key));
    used_.insert(key);
    return Section(j_.at(key), where(key));
  }

  const json& raw(const std::string& key) {
    if (!j_.contains(key)) throw ConfigError("missing field " + where(key));
    used_.insert(key);
    return j_.at(key);
  }

  void finish() const {
    for (const auto& [key, _] : j_.items())
      if (!used_.count(key)) throw ConfigError("unknown field " + where(key));
  }

  std::string where(const std::string& key = "") const {
    if (key.empty()) return path_.empty() ? "config" : path_;
    return path_.empty() ? key : path_ + "." + key;
  }

 private:
  template <class T>
  T get(const std::string& key) {
    used_.insert(key);
    const json& v = j_.at(key);
    if constexpr (std::is_same_v<T, std::uint64_t>) {
      if (!v.is_number_unsigned()) throw ConfigError(where(key) + " must be a non-negative integer");
    } else if constexpr (std::is_integral_v<T> && !std::is_same_v<T, bool>) {
      if (!v.is_number_integer()) throw ConfigError(where(key) + " must be an integer");
    } else if constexpr (std::is_floating_point_v<T>) {
      if (!v.is_number()) throw ConfigError(where(key) + " must be a number");
    }
    try {
      return v.get<T>();
    } catch (const json::exception&) {
      throw ConfigError(where(key) + " has the wrong type");
    }
  }

  const json& j_;
  std::string path_;
  std::set<std::string> used_;
};

template <class T>
void check(bool ok, const T& msg) {
  if (!ok) throw ConfigError(msg);
}

struct Options {
  std::string config;
  std::filesystem::path base;  ///< directory of the config; relative paths resolve against it
  std::string out = ".";
  std::optional<std::uint64_t> seed;
};

json read_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open " + path);
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError(path + ": " + e.what());
  }
}

Section open_config(const json& root) {
  Section s(root, "");
  check(s.req<int>("schema") == kSchema, "unsupported schema (expected 1)");
  return s;
}

GridKind read_manifold(Section& s) {
  const auto name = s.req<std::string>("manifold");
  check(name == "circle" || name == "torus", "manifold must be \"circle\" or \"torus\"");
  return grid_kind_from_string(name);
}

// "resolution": n (n x n on the torus) or [nx, ny].
Grid read_grid(Section& s, GridKind kind) {
  const json& r = s.raw("resolution");
  std::vector<int> sizes;
  if (r.is_number_integer()) {
    sizes.assign(kind == GridKind::circle ? 1 : 2, r.get<int>());
  } else if (r.is_array()) {
    for (const auto& v : r) {
      check(v.is_number_integer(), "resolution entries must be integers");
      sizes.push_back(v.get<int>());
    }
  } else {
    throw ConfigError("resolution must be an integer or an array of integers");
  }
  check(sizes.size() == (kind == GridKind::circle ? 1u : 2u), "resolution does not match the manifold");
  return make_grid(kind, sizes);
}

std::uint64_t read_seed(Section& s, const Options& o, bool required) {
  if (o.seed) {
    if (s.has("seed")) s.req<std::uint64_t>("seed");
    return *o.seed;
  }
  return required ? s.req<std::uint64_t>("seed") : s.opt<std::uint64_t>("seed", 0);
}

double positive(double v, const std::string& name) {
  check(std::isfinite(v) && v > 0.0, name + " must be positive");
  return v;
}

json grid_json(const Grid& g) { return grid_to_json(g); }

double median(std::vector<double> v) {
  if (v.empty()) return 0.0;
  std::sort(v.begin(), v.end());
  const std::size_t m = v.size() / 2;
  return v.size() % 2 ? v[m] : 0.5 * (v[m - 1] + v[m]);
}

double max_of(const std::vector<double>& v) { return v.empty() ? 0.0 : *std::max_element(v.begin(), v.end()); }

std::string shortest(double x) {
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof buf, x);
  return std::string(buf, r.ptr);
}

std::string resolve(const std::filesystem::path& base, const std::string& path) {
  const std::filesystem::path p(path);
  return (p.is_absolute() ? p : base / p).string();
}

void write_text(const std::filesystem::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary);
  if (!out) throw ConfigError("cannot write " + p.string());
  out << text;
}

void write_json(const std::filesystem::path& p, const json& j) { write_text(p, j.dump(2) + "\n"); }

std::filesystem::path out_dir(const Options& o) {
  std::error_code ec;
  std::filesystem::create_directories(o.out, ec);
  if (ec) throw ConfigError("cannot create output directory " + o.out + ": " + ec.message());
  return o.out;
}

// ---------------------------------------------------------------------------
// invariance-check

MetricForm read_metric(Section m, json& echo) {
  const auto name = m.req<std::string>("name");
  echo["name"] = name;
  MetricForm form;
  if (name == "fisher_rao") {
    form = fisher_rao_form();
  } else if (name == "two_param") {
    const double c1 = m.req<double>("c1"), c2 = m.req<double>("c2");
    check(std::isfinite(c1) && std::isfinite(c2), "two_param constants must be finite");
    echo["c1"] = c1;
    echo["c2"] = c2;
    form = two_param_family(c1, c2);
  } else if (name == "sobolev") {
    const int order = m.req<int>("order");
    check(order >= 0, "sobolev order must be >= 0");
    echo["order"] = order;
    form = sobolev_dens_form(order);
  } else if (name == "extended") {
    json inner;
    form = extended_form(read_metric(m.sub("base"), inner));
    echo["base"] = inner;
  } else {
    throw ConfigError("unknown metric \"" + name + "\"");
  }
  m.finish();
  return form;
}

int cmd_invariance(const Options& o) {
  const json root = read_json(o.config);
  Section s = open_config(root);
  json metric_echo;
  const MetricForm G = read_metric(s.sub("metric"), metric_echo);
  const GridKind kind = read_manifold(s);
  const Grid g = read_grid(s, kind);
  const auto trials = s.req<int>("trials");
  check(trials >= 1, "trials must be >= 1");
  const std::uint64_t seed = read_seed(s, o, true);
  const auto data = s.opt<std::string>("data", "prob");
  check(data == "prob" || data == "dens", "data must be \"prob\" or \"dens\"");
  const auto mode = s.opt<std::string>("mode", "invariance");
  check(mode == "invariance" || mode == "compare_four_fr", "mode must be \"invariance\" or \"compare_four_fr\"");
  const double default_tol = mode == "compare_four_fr" ? 1e-12 : kind == GridKind::circle ? 1e-8 : 1e-5;
  const double tol = positive(s.opt<double>("tolerance", default_tol), "tolerance");
  const int max_mode = s.opt<int>("max_mode", 3);
  check(max_mode >= 1, "max_mode must be >= 1");
  s.finish();

  const InvarianceTrialOptions topt{data == "prob", max_mode};
  std::vector<double> values(static_cast<std::size_t>(trials));
  if (mode == "invariance") {
    values = invariance_trials(G, g, values.size(), seed, topt);
  } else {
    parallel_for(values.size(), [&](std::size_t i) {
      Rng rng = trial_stream(seed, i);
      const Density mu = random_density(g, rng, max_mode, topt.prob);
      const TangentDensity a = random_tangent(g, rng, max_mode, topt.prob);
      const TangentDensity b = random_tangent(g, rng, max_mode, topt.prob);
      const double four_fr = 4.0 * fisher_rao(mu, a, b);
      values[i] = std::abs(G(mu, a, b) - four_fr) / std::abs(four_fr);
    });
  }
  for (double v : values)
    if (!std::isfinite(v)) throw NumericalError("non-finite defect");

  const double worst = max_of(values);
  const bool ok = worst <= tol;
  json rep;
  rep["command"] = "invariance-check";
  rep["metric"] = metric_echo;
  rep["mode"] = mode;
  rep["grid"] = grid_json(g);
  rep["data"] = data;
  rep["max_mode"] = max_mode;
  rep["seed"] = seed;
  rep["trials"] = trials;
  rep["tolerance"] = tol;
  rep["defects"] = values;
  rep["max"] = worst;
  rep["median"] = median(values);
  rep["pass"] = ok;
  write_json(out_dir(o) / "report.json", rep);
  std::cout << "invariance-check: max " << worst << " (tolerance " << tol << ") " << (ok ? "pass" : "FAIL") << "\n";
  return ok ? pass : assertion_failed;
}

// ---------------------------------------------------------------------------
// moser

Density read_density(Section d, const Grid& g, std::uint64_t seed, const std::filesystem::path& base, json& echo) {
  const auto type = d.req<std::string>("type");
  echo["type"] = type;
  const bool circle = g.kind() == GridKind::circle;
  const double vol = g.volume();
  std::optional<Density> mu;
  if (type == "reference_multiple") {
    const double mass = positive(d.req<double>("mass"), "density.mass");
    echo["mass"] = mass;
    mu = scale(uniform_density(g), mass);
  } else if (type == "trig") {
    const double a = d.req<double>("amplitude");
    check(std::abs(a) < 1.0, "density.amplitude must lie in (-1, 1)");
    echo["amplitude"] = a;
    mu = density_from_function(g, [&](const Point& p) {
      return (1.0 + a * (circle ? std::sin(p[0]) : std::sin(p[0]) * std::sin(p[1]))) / vol;
    });
  } else if (type == "random") {
    const int max_mode = d.opt<int>("max_mode", 3);
    check(max_mode >= 1, "density.max_mode must be >= 1");
    echo["max_mode"] = max_mode;
    Rng rng = trial_stream(seed, 0);
    mu = random_density(g, rng, max_mode, false);
  } else if (type == "file") {
    const auto path = d.req<std::string>("path");
    echo["path"] = path;
    const Density loaded = density_from_json(read_json(resolve(base, path)));
    check(loaded.grid() == g, "density file grid does not match the configured resolution");
    mu = loaded;
  } else {
    throw ConfigError("unknown density type \"" + type + "\"");
  }
  d.finish();
  return *mu;
}

int cmd_moser(const Options& o) {
  const json root = read_json(o.config);
  Section s = open_config(root);
  const GridKind kind = read_manifold(s);
  const Grid g = read_grid(s, kind);
  const std::uint64_t seed = read_seed(s, o, false);
  json density_echo;
  const Density mu = read_density(s.sub("density"), g, seed, o.base, density_echo);
  const int steps = s.opt<int>("steps", 100);
  const double tol = positive(s.opt<double>("tolerance", kind == GridKind::circle ? 1e-6 : 1e-3), "tolerance");
  const bool write_diffeo = s.opt<bool>("write_diffeo", true);
  s.finish();

  const Density mu0 = uniform_density(g);
  const MoserResult r = moser(mu, mu0, {steps, tol});
  if (!std::isfinite(r.residual)) throw NumericalError("non-finite Moser residual");
  const bool ok = r.residual <= tol && r.min_jac > 0.0;

  const auto dir = out_dir(o);
  json rep;
  rep["command"] = "moser";
  rep["grid"] = grid_json(g);
  rep["density"] = density_echo;
  rep["seed"] = seed;
  if (kind == GridKind::torus) rep["steps"] = steps;
  rep["tolerance"] = tol;
  rep["mass"] = r.mass;
  rep["residual"] = r.residual;
  rep["min_jac"] = r.min_jac;
  rep["pass"] = ok;
  write_json(dir / "report.json", rep);
  if (write_diffeo) write_json(dir / "diffeo.json", to_json(r.map));
  std::cout << "moser: residual " << r.residual << " (tolerance " << tol << "), min jac " << r.min_jac << " "
            << (ok ? "pass" : "FAIL") << "\n";
  return ok ? pass : assertion_failed;
}

// ---------------------------------------------------------------------------
// nullspace

int cmd_nullspace(const Options& o) {
  const json root = read_json(o.config);
  Section s = open_config(root);
  const GridKind kind = read_manifold(s);
  const Grid g = read_grid(s, kind);
  if (o.seed || s.has("seed")) read_seed(s, o, false);

  Section f = s.sub("fields");
  const auto type = f.req<std::string>("type");
  json fields_echo{{"type", type}};
  std::vector<VectorField> fields;
  if (type == "exact_streams") {
    check(kind == GridKind::torus, "exact_streams fields need the torus");
    const int max_mode = f.opt<int>("max_mode", 2);
    const bool with_constant = f.opt<bool>("include_constant", false);
    check(max_mode >= 1, "fields.max_mode must be >= 1");
    fields_echo["max_mode"] = max_mode;
    fields_echo["include_constant"] = with_constant;
    require_gram_size(g);
    fields = exact_stream_fields(g, max_mode, with_constant);
  } else if (type == "constant") {
    for (int a = 0; a < g.dims(); ++a) fields.push_back(constant_field(g, a));
  } else {
    throw ConfigError("unknown field set \"" + type + "\"");
  }
  f.finish();

  const double tau = positive(s.opt<double>("tau", 1e-8), "tau");
  const int basis = s.opt<int>("basis_count", 4);
  check(basis >= 1, "basis_count must be >= 1");
  Section e = s.sub("expect");
  std::size_t lo = 0, hi = 0;
  if (e.has("null_count")) {
    check(!e.has("null_range"), "expect takes null_count or null_range, not both");
    lo = hi = e.req<std::size_t>("null_count");
  } else {
    const auto range = e.req<std::vector<std::size_t>>("null_range");
    check(range.size() == 2 && range[0] <= range[1], "expect.null_range must be [lo, hi] with lo <= hi");
    lo = range[0];
    hi = range[1];
  }
  const std::optional<double> min_gap =
      e.has("min_gap") ? std::optional<double>(e.req<double>("min_gap")) : std::nullopt;
  const std::optional<double> max_angle =
      e.has("max_angle_deg") ? std::optional<double>(e.req<double>("max_angle_deg")) : std::nullopt;
  e.finish();
  s.finish();

  const SpectrumReport rep = invariant_nullspace(constraint_gram(uniform_density(g), fields),
                                                 static_cast<std::size_t>(basis), tau);
  for (Eigen::Index i = 0; i < rep.eigenvalues.size(); ++i)
    if (!std::isfinite(rep.eigenvalues[i])) throw NumericalError("non-finite eigenvalue");
  const double angle = rep.principal_angles_deg.empty() ? 90.0 : rep.principal_angles_deg.back();
  bool ok = rep.null_count >= lo && rep.null_count <= hi;
  if (min_gap) ok = ok && rep.gap_ratio >= *min_gap;
  if (max_angle) ok = ok && angle <= *max_angle;

  json out;
  out["command"] = "nullspace";
  out["grid"] = grid_json(g);
  out["fields"] = fields_echo;
  out["field_count"] = rep.field_count;
  out["tau"] = tau;
  out["lambda_max"] = rep.lambda_max;
  out["null_count"] = rep.null_count;
  out["expected_null_range"] = {lo, hi};
  out["gap_ratio"] = rep.gap_ratio;
  if (min_gap) out["min_gap"] = *min_gap;
  if (max_angle) out["max_angle_deg"] = *max_angle;
  out["principal_angles_deg"] = rep.principal_angles_deg;
  json fits = json::array();
  for (const auto& fit : rep.fits)
    fits.push_back({{"c1", fit.c1}, {"c2", fit.c2}, {"residual", fit.residual}});
  out["basis_fits"] = fits;
  out["pass"] = ok;

  const auto dir = out_dir(o);
  write_json(dir / "report.json", out);
  std::string csv = "index,eigenvalue\n";
  for (Eigen::Index i = 0; i < rep.eigenvalues.size(); ++i)
    csv += std::to_string(i) + "," + shortest(rep.eigenvalues[i]) + "\n";
  write_text(dir / "spectrum.csv", csv);
  std::cout << "nullspace: " << rep.field_count << " fields, null count " << rep.null_count << " (expected ["
            << lo << ", " << hi << "]), gap " << rep.gap_ratio << " " << (ok ? "pass" : "FAIL") << "\n";
  return ok ? pass : assertion_failed;
}

// ---------------------------------------------------------------------------
// descent

std::vector<std::pair<TangentDensity, TangentDensity>> read_tangent_pairs(const std::string& path, const Grid& g) {
  const json j = read_json(path);
  Section s(j, path);
  const json& pairs = s.raw("pairs");
  s.finish();
  check(pairs.is_array() && !pairs.empty(), path + ": pairs must be a non-empty array");
  std::vector<std::pair<TangentDensity, TangentDensity>> out;
  auto tangent = [&](const json& v, std::size_t i) {
    check(v.is_array() && v.size() == g.num_nodes(),
          path + ": tangent in pair " + std::to_string(i) + " must have " + std::to_string(g.num_nodes()) + " samples");
    Field f(static_cast<Eigen::Index>(v.size()));
    for (std::size_t k = 0; k < v.size(); ++k) {
      check(v[k].is_number(), path + ": tangent samples must be numbers");
      f[static_cast<Eigen::Index>(k)] = v[k].get<double>();
    }
    check(f.allFinite(), path + ": tangent samples must be finite");
    check(f.cwiseAbs().maxCoeff() > 0.0, path + ": zero tangent in pair " + std::to_string(i));
    const double total = integrate(g, f);
    check(std::abs(total) <= 1e-10 * f.cwiseAbs().maxCoeff() * g.volume(),
          path + ": tangent in pair " + std::to_string(i) + " does not integrate to zero (" + shortest(total) + ")");
    return TangentDensity(g, f, true, 1e-10);
  };
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    check(pairs[i].is_array() && pairs[i].size() == 2, path + ": each pair must hold two tangents");
    out.emplace_back(tangent(pairs[i][0], i), tangent(pairs[i][1], i));
  }
  return out;
}

int cmd_descent(const Options& o) {
  const json root = read_json(o.config);
  Section s = open_config(root);
  const Grid g = make_circle(s.req<int>("resolution"));
  const double max_spread = positive(s.opt<double>("max_spread", 1e-8), "max_spread");
  std::optional<std::string> file;
  int pairs = 0;
  std::uint64_t seed = 0;
  int max_mode = 3;
  if (s.has("tangents")) {
    file = s.req<std::string>("tangents");
    check(!s.has("pairs"), "give either pairs or tangents, not both");
    if (o.seed || s.has("seed")) seed = read_seed(s, o, false);
  } else {
    pairs = s.req<int>("pairs");
    check(pairs >= 1, "pairs must be >= 1");
    seed = read_seed(s, o, true);
    max_mode = s.opt<int>("max_mode", 3);
    check(max_mode >= 1, "max_mode must be >= 1");
  }
  s.finish();

  std::vector<std::pair<TangentDensity, TangentDensity>> data;
  if (file) {
    data = read_tangent_pairs(resolve(o.base, *file), g);
  } else {
    for (int i = 0; i < pairs; ++i) {
      Rng rng = trial_stream(seed, static_cast<std::uint64_t>(i));
      TangentDensity a = random_tangent(g, rng, max_mode), b = random_tangent(g, rng, max_mode);
      data.emplace_back(std::move(a), std::move(b));
    }
  }

  // Ratios on (a, a), (b, b) and, when FR(a, b) is not negligible, (a, b).
  const Density mu0 = uniform_density(g);
  std::vector<double> ratios;
  json per_pair = json::array();
  for (const auto& [a, b] : data) {
    const double faa = fisher_rao(mu0, a, a), fbb = fisher_rao(mu0, b, b), fab = fisher_rao(mu0, a, b);
    json entry;
    entry["aa"] = descend_h1_to_prob(mu0, a, a) / faa;
    entry["bb"] = descend_h1_to_prob(mu0, b, b) / fbb;
    ratios.push_back(entry["aa"]);
    ratios.push_back(entry["bb"]);
    if (std::abs(fab) > 1e-8 * std::sqrt(faa * fbb)) {
      entry["ab"] = descend_h1_to_prob(mu0, a, b) / fab;
      ratios.push_back(entry["ab"]);
    } else {
      entry["ab"] = nullptr;
    }
    per_pair.push_back(entry);
  }
  for (double r : ratios)
    if (!std::isfinite(r)) throw NumericalError("non-finite ratio");
  const auto [lo, hi] = std::minmax_element(ratios.begin(), ratios.end());
  const double spread = *hi - *lo;
  const bool ok = spread <= max_spread;

  json rep;
  rep["command"] = "descent";
  rep["grid"] = grid_json(g);
  if (file) rep["tangents"] = *file;
  else {
    rep["seed"] = seed;
    rep["max_mode"] = max_mode;
  }
  rep["pairs"] = data.size();
  rep["ratios"] = per_pair;
  rep["constant"] = median(ratios);
  rep["spread"] = spread;
  rep["max_spread"] = max_spread;
  rep["pass"] = ok;
  write_json(out_dir(o) / "report.json", rep);
  std::cout << "descent: ratio to FR " << median(ratios) << ", spread " << spread << " " << (ok ? "pass" : "FAIL")
            << "\n";
  return ok ? pass : assertion_failed;
}

}  // namespace

int main(int argc, char** argv) {
  openblas_set_num_threads(1);

  CLI::App app{"Diffeomorphism-invariant metrics on densities: batch experiments"};
  app.require_subcommand(1);
  Options opt;
  std::uint64_t seed = 0;
  auto add = [&](const std::string& name, const std::string& help) {
    CLI::App* sub = app.add_subcommand(name, help);
    sub->add_option("--config", opt.config, "JSON config (schema 1)")->required()->check(CLI::ExistingFile);
    sub->add_option("--out", opt.out, "output directory")->capture_default_str();
    sub->add_option("--seed", seed, "master seed, overrides the config");
    return sub;
  };
  CLI::App* inv = add("invariance-check", "random invariance trials for one metric");
  CLI::App* mos = add("moser", "normalize a density to a multiple of the uniform one");
  CLI::App* nul = add("nullspace", "spectrum of the invariance constraint Gram operator");
  CLI::App* des = add("descent", "compare the descended H1 metric with Fisher-Rao on the circle");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? pass : config_error;
  }
  for (CLI::App* sub : {inv, mos, nul, des})
    if (sub->parsed() && sub->count("--seed")) opt.seed = seed;
  opt.base = std::filesystem::path(opt.config).parent_path();

  try {
    if (inv->parsed()) return cmd_invariance(opt);
    if (mos->parsed()) return cmd_moser(opt);
    if (nul->parsed()) return cmd_nullspace(opt);
    return cmd_descent(opt);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return config_error;
  } catch (const InvalidArgument& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return config_error;
  } catch (const NumericalError& e) {
    std::cerr << "numerical error: " << e.what() << "\n";
    return numerical_error;
  } catch (const json::exception& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return config_error;
  } catch (const std::exception& e) {
    std::cerr << "numerical error: " << e.what() << "\n";
    return numerical_error;
  }
}
