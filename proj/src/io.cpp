#include "coagfrag/io.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

namespace coagfrag {

namespace pt = boost::property_tree;

namespace {

std::string fmt17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

double parse_double(const std::string& s, const std::string& what) {
  const char* b = s.data();
  const char* e = s.data() + s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(*b))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(e[-1]))) --e;
  double v = 0.0;
  auto [p, ec] = std::from_chars(b, e, v);
  if (ec != std::errc() || p != e || b == e)
    throw ParseError(what + ": not a number: '" + s + "'");
  return v;
}

std::vector<double> parse_list(const std::string& s, const std::string& what) {
  std::vector<double> out;
  std::string token;
  std::istringstream in(s);
  while (in >> token) {
    if (token.back() == ',') token.pop_back();
    if (!token.empty()) out.push_back(parse_double(token, what));
  }
  return out;
}

bool parse_bool(const std::string& s, const std::string& what) {
  if (s == "true" || s == "on" || s == "yes" || s == "1") return true;
  if (s == "false" || s == "off" || s == "no" || s == "0") return false;
  throw ConfigError(what + ": expected true/false, got '" + s + "'");
}

class Reader {
 public:
  explicit Reader(const pt::ptree& tree) : tree_(tree) {}

  std::optional<std::string> raw(const std::string& key) {
    used_.insert(key);
    auto v = tree_.get_optional<std::string>(pt::ptree::path_type(key, '.'));
    if (v) {
      auto s = *v;
      s.erase(0, s.find_first_not_of(" \t"));
      s.erase(s.find_last_not_of(" \t") + 1);
      return s;
    }
    return std::nullopt;
  }

  double required(const std::string& key) {
    auto v = raw(key);
    if (!v || v->empty()) throw ConfigError("missing required key " + key);
    return number(key, *v);
  }

  double number(const std::string& key, double fallback) {
    auto v = raw(key);
    return v ? number(key, *v) : fallback;
  }

  std::optional<double> optional_number(const std::string& key) {
    auto v = raw(key);
    if (!v) return std::nullopt;
    return number(key, *v);
  }

  std::string text(const std::string& key, const std::string& fallback) {
    auto v = raw(key);
    return v ? *v : fallback;
  }

  std::vector<double> list(const std::string& key) {
    auto v = raw(key);
    if (!v) return {};
    try {
      return parse_list(*v, key);
    } catch (const ParseError& e) {
      throw ConfigError(e.what());
    }
  }

  bool flag(const std::string& key, bool fallback) {
    auto v = raw(key);
    return v ? parse_bool(*v, key) : fallback;
  }

  void reject_unknown(const std::set<std::string>& prefixes_allowed) const {
    for (const auto& [section, body] : tree_) {
      if (body.empty()) throw ConfigError("key outside a section: " + section);
      for (const auto& [key, value] : body) {
        const std::string full = section + "." + key;
        if (used_.count(full)) continue;
        bool ok = false;
        for (const auto& p : prefixes_allowed)
          if (full.rfind(p, 0) == 0) ok = true;
        if (!ok) throw ConfigError("unknown key " + full);
      }
    }
  }

 private:
  double number(const std::string& key, const std::string& v) {
    try {
      return parse_double(v, key);
    } catch (const ParseError& e) {
      throw ConfigError(e.what());
    }
  }

  const pt::ptree& tree_;
  std::set<std::string> used_;
};

void require_increasing(const std::vector<double>& v, const std::string& what) {
  if (v.empty()) throw ConfigError(what + " must not be empty");
  for (std::size_t i = 1; i < v.size(); ++i)
    if (!(v[i] > v[i - 1])) throw ConfigError(what + " must be strictly increasing");
}

std::string strip_comments(std::istream& in) {
  std::ostringstream out;
  std::string line;
  while (std::getline(in, line)) {
    const auto pos = line.find_first_of("#;");
    if (pos != std::string::npos) line.erase(pos);
    out << line << '\n';
  }
  return out.str();
}

}  // namespace

std::string to_string(ExperimentKind k) {
  switch (k) {
    case ExperimentKind::Single:
      return "single";
    case ExperimentKind::JSweep:
      return "j_sweep";
    case ExperimentKind::RhoSweep:
      return "rho_sweep";
    case ExperimentKind::ConvergenceStudy:
      return "convergence_study";
  }
  return "?";
}

ExperimentConfig parse_config(std::istream& in, const std::filesystem::path& base_dir) {
  pt::ptree tree;
  std::istringstream cleaned(strip_comments(in));
  try {
    pt::read_ini(cleaned, tree);
  } catch (const pt::ini_parser_error& e) {
    throw ConfigError(std::string("config syntax: ") + e.what());
  }
  Reader r(tree);
  ExperimentConfig cfg;
  RunConfig& run = cfg.run;

  run.spec.lambda = r.required("model.lambda");
  run.spec.alpha = r.required("model.alpha");
  run.spec.K0 = r.required("model.K0");
  run.spec.a0 = r.required("model.a0");
  run.initial.mass = r.required("model.rho");
  const std::string daughter = r.text("model.daughter", "power_law");
  if (daughter == "power_law") {
    run.spec.daughter = PowerLawDaughter{r.required("model.nu")};
  } else if (daughter == "tabulated") {
    TabulatedDaughter tab;
    tab.breakpoints = r.list("daughter.breakpoints");
    if (tab.breakpoints.size() < 2) throw ConfigError("daughter.breakpoints needs >= 2 values");
    for (std::size_t p = 0; p + 1 < tab.breakpoints.size(); ++p) {
      const std::string key = "daughter.piece" + std::to_string(p);
      auto c = r.list(key);
      if (c.empty()) throw ConfigError("missing " + key);
      tab.coefficients.push_back(std::move(c));
    }
    run.spec.daughter = std::move(tab);
  } else {
    throw ConfigError("model.daughter must be power_law or tabulated");
  }

  const std::string profile = r.text("initial.profile", "exponential");
  auto& ic = run.initial;
  if (profile == "exponential") {
    ic.kind = InitialKind::Exponential;
    ic.scale = r.number("initial.scale", 1.0);
  } else if (profile == "monodisperse") {
    ic.kind = InitialKind::Monodisperse;
    ic.center = r.number("initial.center", 1.0);
    ic.width = r.number("initial.width", 0.1);
  } else if (profile == "power_law") {
    ic.kind = InitialKind::PowerLawCutoff;
    ic.exponent = r.number("initial.exponent", 0.5);
    ic.cutoff = r.number("initial.cutoff", 1.0);
  } else if (profile == "tabulated") {
    ic.kind = InitialKind::Tabulated;
    const auto file = r.raw("initial.file");
    if (!file || file->empty()) throw ConfigError("initial.file required for tabulated profile");
    std::filesystem::path p(*file);
    ic.file = p.is_relative() ? base_dir / p : p;
  } else {
    throw ConfigError("initial.profile must be exponential, monodisperse, power_law or tabulated");
  }

  auto& g = run.grid;
  const std::string kind = r.text("grid.kind", "geometric");
  if (kind == "geometric")
    g.kind = GridKind::Geometric;
  else if (kind == "uniform")
    g.kind = GridKind::Uniform;
  else
    throw ConfigError("grid.kind must be geometric or uniform");
  g.x_min = r.number("grid.x_min", g.x_min);
  g.x_max = r.number("grid.x_max", g.x_max);
  g.cells_per_decade = r.number("grid.cells_per_decade", g.cells_per_decade);
  const double cells = r.number("grid.cells", 0.0);
  if (cells < 0.0 || cells != std::floor(cells)) throw ConfigError("grid.cells must be a count");
  g.n_cells = static_cast<std::size_t>(cells);
  if (!(g.x_min > 0.0) || !(g.x_max > g.x_min)) throw ConfigError("grid needs 0 < x_min < x_max");

  const std::string mode = r.text("truncation.mode", "none");
  if (mode == "cutoff")
    run.trunc = TruncationSpec::cutoff(r.required("truncation.j"));
  else if (mode == "none")
    run.trunc = TruncationSpec::none();
  else
    throw ConfigError("truncation.mode must be cutoff or none");

  run.t_end = r.required("solver.t_end");
  run.dt_init = r.number("solver.dt_init", run.dt_init);
  run.dt_min = r.number("solver.dt_min", run.dt_min);
  run.dt_max = r.number("solver.dt_max", run.dt_max);
  run.rel_tol = r.number("solver.rel_tol", run.rel_tol);
  run.abs_tol = r.number("solver.abs_tol", run.abs_tol);
  run.dust_tol = r.number("solver.dust_tol", run.dust_tol);
  run.output_stride = r.number("solver.output_stride", run.output_stride);
  run.snapshot_every = r.number("solver.snapshot_every", run.snapshot_every);
  run.m0 = r.optional_number("solver.m0");
  run.m1 = r.optional_number("solver.m1");
  run.extra_moments = r.list("solver.extra_moments");
  run.coagulation = r.flag("solver.coagulation", true);
  run.fragmentation = r.flag("solver.fragmentation", true);

  const std::string ek = r.text("experiment.kind", "single");
  if (ek == "single") {
    cfg.kind = ExperimentKind::Single;
  } else if (ek == "j_sweep") {
    cfg.kind = ExperimentKind::JSweep;
    cfg.j_list = r.list("experiment.j_list");
    require_increasing(cfg.j_list, "experiment.j_list");
  } else if (ek == "rho_sweep") {
    cfg.kind = ExperimentKind::RhoSweep;
    cfg.rho_list = r.list("experiment.rho_list");
    require_increasing(cfg.rho_list, "experiment.rho_list");
    cfg.j_list = r.list("experiment.j_list");
    require_increasing(cfg.j_list, "experiment.j_list");
  } else if (ek == "convergence_study") {
    cfg.kind = ExperimentKind::ConvergenceStudy;
    cfg.cells_per_decade_list = r.list("experiment.cells_per_decade_list");
    require_increasing(cfg.cells_per_decade_list, "experiment.cells_per_decade_list");
  } else {
    throw ConfigError("experiment.kind must be single, j_sweep, rho_sweep or convergence_study");
  }
  const auto out = r.raw("experiment.output");
  if (out && !out->empty()) {
    std::filesystem::path p(*out);
    cfg.output_dir = p.is_relative() ? base_dir / p : p;
  }
  const double seed = r.number("experiment.seed", 0.0);
  if (seed < 0.0 || seed != std::floor(seed)) throw ConfigError("experiment.seed must be a count");
  cfg.seed = static_cast<std::uint64_t>(seed);

  r.reject_unknown({"daughter.piece"});
  try {
    run.check();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  return cfg;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config " + path.string());
  return parse_config(in, path.parent_path());
}

std::string format_config(const ExperimentConfig& cfg) {
  const RunConfig& run = cfg.run;
  std::ostringstream os;
  auto list = [](const std::vector<double>& v) {
    std::string s;
    for (double x : v) s += (s.empty() ? "" : " ") + fmt17(x);
    return s;
  };
  os << "[model]\n";
  os << "lambda = " << fmt17(run.spec.lambda) << "\nalpha = " << fmt17(run.spec.alpha)
     << "\nK0 = " << fmt17(run.spec.K0) << "\na0 = " << fmt17(run.spec.a0)
     << "\nrho = " << fmt17(run.initial.mass) << '\n';
  if (const auto* pl = std::get_if<PowerLawDaughter>(&run.spec.daughter)) {
    os << "daughter = power_law\nnu = " << fmt17(pl->nu) << '\n';
  } else {
    const auto& tab = std::get<TabulatedDaughter>(run.spec.daughter);
    os << "daughter = tabulated\n\n[daughter]\nbreakpoints = " << list(tab.breakpoints) << '\n';
    for (std::size_t p = 0; p < tab.coefficients.size(); ++p)
      os << "piece" << p << " = " << list(tab.coefficients[p]) << '\n';
  }

  const auto& ic = run.initial;
  os << "\n[initial]\n";
  switch (ic.kind) {
    case InitialKind::Exponential:
      os << "profile = exponential\nscale = " << fmt17(ic.scale) << '\n';
      break;
    case InitialKind::Monodisperse:
      os << "profile = monodisperse\ncenter = " << fmt17(ic.center)
         << "\nwidth = " << fmt17(ic.width) << '\n';
      break;
    case InitialKind::PowerLawCutoff:
      os << "profile = power_law\nexponent = " << fmt17(ic.exponent)
         << "\ncutoff = " << fmt17(ic.cutoff) << '\n';
      break;
    case InitialKind::Tabulated:
      os << "profile = tabulated\nfile = " << std::filesystem::absolute(ic.file).string() << '\n';
      break;
  }

  const auto& g = run.grid;
  os << "\n[grid]\nkind = " << (g.kind == GridKind::Geometric ? "geometric" : "uniform")
     << "\nx_min = " << fmt17(g.x_min) << "\nx_max = " << fmt17(g.x_max)
     << "\ncells_per_decade = " << fmt17(g.cells_per_decade) << "\ncells = " << g.n_cells << '\n';

  os << "\n[truncation]\n";
  if (run.trunc.mode == TruncationMode::Cutoff)
    os << "mode = cutoff\nj = " << fmt17(run.trunc.j) << '\n';
  else
    os << "mode = none\n";

  os << "\n[solver]\nt_end = " << fmt17(run.t_end) << "\ndt_init = " << fmt17(run.dt_init)
     << "\ndt_min = " << fmt17(run.dt_min) << "\ndt_max = " << fmt17(run.dt_max)
     << "\nrel_tol = " << fmt17(run.rel_tol) << "\nabs_tol = " << fmt17(run.abs_tol)
     << "\ndust_tol = " << fmt17(run.dust_tol)
     << "\noutput_stride = " << fmt17(run.output_stride)
     << "\nsnapshot_every = " << fmt17(run.snapshot_every) << '\n';
  if (run.m0) os << "m0 = " << fmt17(*run.m0) << '\n';
  if (run.m1) os << "m1 = " << fmt17(*run.m1) << '\n';
  if (!run.extra_moments.empty()) os << "extra_moments = " << list(run.extra_moments) << '\n';
  os << "coagulation = " << (run.coagulation ? "true" : "false")
     << "\nfragmentation = " << (run.fragmentation ? "true" : "false") << '\n';

  os << "\n[experiment]\nkind = " << to_string(cfg.kind) << '\n';
  if (!cfg.j_list.empty()) os << "j_list = " << list(cfg.j_list) << '\n';
  if (!cfg.rho_list.empty()) os << "rho_list = " << list(cfg.rho_list) << '\n';
  if (!cfg.cells_per_decade_list.empty())
    os << "cells_per_decade_list = " << list(cfg.cells_per_decade_list) << '\n';
  if (!cfg.output_dir.empty()) os << "output = " << std::filesystem::absolute(cfg.output_dir).string() << '\n';
  os << "seed = " << cfg.seed << '\n';
  return os.str();
}

const std::vector<std::string>& csv_columns() {
  static const std::vector<std::string> cols{
      "t",        "M_m0",     "M_m1",           "M_1", "M_lambda", "M_2lambda-alpha",
      "log_mass", "lyapunov", "cum_trunc_loss", "dt",  "steps"};
  return cols;
}

void write_csv(std::ostream& out, const TimeSeries& ts) {
  const auto& cols = csv_columns();
  for (std::size_t c = 0; c < cols.size(); ++c) out << (c ? "," : "") << cols[c];
  out << '\n';
  const auto& e = ts.exponents;
  for (const auto& r : ts.records) {
    out << fmt17(r.t) << ',' << fmt17(r.moments.at(e.m0)) << ',' << fmt17(r.moments.at(e.m1))
        << ',' << fmt17(r.moments.at(1.0)) << ',' << fmt17(r.moments.at(e.lambda)) << ','
        << fmt17(r.moments.at(e.high)) << ',' << fmt17(r.moments.log_mass) << ','
        << fmt17(r.lyapunov) << ',' << fmt17(r.cum_trunc_loss) << ',' << fmt17(r.dt) << ','
        << r.stats.accepted << '\n';
  }
}

std::vector<CsvRow> read_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw ParseError("csv: empty input");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  {
    std::string expected;
    for (const auto& c : csv_columns()) expected += (expected.empty() ? "" : ",") + c;
    if (line != expected) throw ParseError("csv: unexpected header '" + line + "'");
  }
  std::vector<CsvRow> rows;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::string cell;
    std::istringstream ls(line);
    while (std::getline(ls, cell, ',')) cells.push_back(cell);
    if (cells.size() != csv_columns().size())
      throw ParseError("csv line " + std::to_string(lineno) + ": expected " +
                       std::to_string(csv_columns().size()) + " fields");
    const std::string where = "csv line " + std::to_string(lineno);
    double v[10];
    for (int k = 0; k < 10; ++k) v[k] = parse_double(cells[k], where);
    const double steps = parse_double(cells[10], where);
    if (steps < 0.0 || steps != std::floor(steps))
      throw ParseError(where + ": steps must be a count");
    rows.push_back({v[0], v[1], v[2], v[3], v[4], v[5], v[6], v[7], v[8], v[9],
                    static_cast<std::size_t>(steps)});
    if (rows.size() > 1 && !(rows.back().t > rows[rows.size() - 2].t))
      throw ParseError(where + ": time must increase");
  }
  if (rows.empty()) throw ParseError("csv: no data rows");
  return rows;
}

void write_snapshot(std::ostream& out, const State& state) {
  const auto edges = state.grid->edges();
  out << "# coagfrag snapshot\n";
  out << "t " << fmt17(state.time) << '\n';
  out << "cells " << state.size() << '\n';
  out << "edges\n";
  for (double e : edges) out << fmt17(e) << '\n';
  out << "density\n";
  for (double v : state.density) out << fmt17(v) << '\n';
}

State read_snapshot(std::istream& in) {
  std::string line;
  auto next = [&](const char* what) {
    while (std::getline(in, line)) {
      if (!line.empty() && line.back() == '\r') line.pop_back();
      if (!line.empty() && line[0] != '#') return;
    }
    throw ParseError(std::string("snapshot: missing ") + what);
  };
  auto keyed = [&](const char* key) {
    next(key);
    const std::string k(key);
    if (line.rfind(k + " ", 0) != 0) throw ParseError("snapshot: expected '" + k + "'");
    return line.substr(k.size() + 1);
  };
  const double t = parse_double(keyed("t"), "snapshot t");
  const double n = parse_double(keyed("cells"), "snapshot cells");
  if (!(n >= 1.0) || n != std::floor(n)) throw ParseError("snapshot: bad cell count");
  const auto cells = static_cast<std::size_t>(n);
  next("edges");
  if (line != "edges") throw ParseError("snapshot: expected 'edges'");
  std::vector<double> edges(cells + 1);
  for (auto& e : edges) {
    next("edge value");
    e = parse_double(line, "snapshot edge");
  }
  next("density");
  if (line != "density") throw ParseError("snapshot: expected 'density'");
  std::vector<double> f(cells);
  for (auto& v : f) {
    next("density value");
    v = parse_double(line, "snapshot density");
  }
  GridPtr grid;
  try {
    grid = std::make_shared<const SizeGrid>(SizeGrid::from_edges(std::move(edges)));
  } catch (const std::domain_error& e) {
    throw ParseError(std::string("snapshot: ") + e.what());
  }
  return State(grid, std::move(f), t);
}

void write_file_atomic(const std::filesystem::path& path, const std::string& contents) {
  std::error_code ec;
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path(), ec);
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + tmp.string());
    out << contents;
    out.flush();
    if (!out) throw IoError("write failed for " + tmp.string());
  }
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw IoError("cannot rename " + tmp.string() + ": " + ec.message());
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

TimeSeries time_series_from_csv(const std::vector<CsvRow>& rows, const TrackedExponents& e) {
  TimeSeries ts;
  ts.exponents = e;
  ts.exponents.extras.clear();
  for (const auto& row : rows) {
    Record r;
    r.t = row.t;
    r.moments.moments[e.m0] = row.M_m0;
    r.moments.moments[e.m1] = row.M_m1;
    r.moments.moments[1.0] = row.M_1;
    r.moments.moments[e.lambda] = row.M_lambda;
    r.moments.moments[e.high] = row.M_high;
    r.moments.log_mass = row.log_mass;
    r.lyapunov = row.lyapunov;
    r.cum_trunc_loss = row.cum_trunc_loss;
    r.dt = row.dt;
    r.stats.accepted = row.steps;
    ts.records.push_back(std::move(r));
  }
  return ts;
}

}  // namespace coagfrag
