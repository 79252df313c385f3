#include "coagfrag/cli.hpp"

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <iostream>
#include <mutex>
#include <sstream>
#include <thread>

#include <CLI11.hpp>
#include <json.hpp>

#include "coagfrag/diagnostics.hpp"
#include "coagfrag/integrator.hpp"
#include "coagfrag/io.hpp"

namespace coagfrag::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string g(double v, int digits = 12) {
  char buf[48];
  std::snprintf(buf, sizeof buf, "%.*g", digits, v);
  return buf;
}

std::string interval_text(const Interval& w) {
  return std::string(w.lo_closed ? "[" : "(") + g(w.lo) + ", " + g(w.hi) + (w.hi_closed ? "]" : ")");
}

template <class F>
int guarded(std::ostream& err, F&& body) {
  try {
    return body();
  } catch (const AssumptionViolation& e) {
    err << "AssumptionViolation(" << to_string(e.which()) << "): " << e.what() << '\n';
    return kValidationFailure;
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << '\n';
    return kValidationFailure;
  } catch (const ParseError& e) {
    err << "parse error: " << e.what() << '\n';
    return kValidationFailure;
  } catch (const IoError& e) {
    err << "I/O error: " << e.what() << '\n';
    return kValidationFailure;
  } catch (const StepTooSmall& e) {
    err << "run aborted: " << e.what() << '\n';
    return kRuntimeAbort;
  } catch (const NonFiniteState& e) {
    err << "run aborted: " << e.what() << '\n';
    return kRuntimeAbort;
  } catch (const std::invalid_argument& e) {
    err << "invalid input: " << e.what() << '\n';
    return kValidationFailure;
  } catch (const std::domain_error& e) {
    err << "domain error: " << e.what() << '\n';
    return kValidationFailure;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kRuntimeAbort;
  }
}

ExperimentConfig load_with_overrides(const Options& opt) {
  if (opt.config.empty()) throw ConfigError("--config is required");
  auto cfg = load_config(opt.config);
  if (!opt.out.empty()) cfg.output_dir = opt.out;
  if (cfg.output_dir.empty()) cfg.output_dir = "coagfrag_out";
  if (opt.snapshot_every) {
    if (*opt.snapshot_every < 0.0) throw ConfigError("--snapshot-every must be >= 0");
    cfg.run.snapshot_every = *opt.snapshot_every;
  }
  return cfg;
}

std::string snapshot_text(const State& s) {
  std::ostringstream os;
  write_snapshot(os, s);
  return os.str();
}

// Writes the CSV, snapshots and a copy of the config text into dir.
void write_run(const fs::path& dir, const TimeSeries& ts, const std::string& config_text) {
  fs::create_directories(dir / "snapshots");
  std::ostringstream csv;
  write_csv(csv, ts);
  write_file_atomic(dir / "timeseries.csv", csv.str());
  std::size_t k = 0;
  for (const auto* r : ts.snapshots()) {
    char name[32];
    std::snprintf(name, sizeof name, "snapshot_%05zu.txt", k++);
    write_file_atomic(dir / "snapshots" / name, snapshot_text(*r->snapshot));
  }
  write_file_atomic(dir / "final_snapshot.txt", snapshot_text(*ts.back().snapshot));
  write_file_atomic(dir / "config.ini", config_text);
}

struct Job {
  RunConfig config;
  fs::path dir;
  std::string config_text;
  std::optional<TimeSeries> result;
  std::string error;
};

void run_pool(std::vector<Job>& jobs, unsigned threads) {
  if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
  threads = std::min<unsigned>(threads, static_cast<unsigned>(jobs.size()));
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t k = next++; k < jobs.size(); k = next++) {
      auto& job = jobs[k];
      try {
        job.result = run(job.config);
        write_run(job.dir, *job.result, job.config_text);
      } catch (const std::exception& e) {
        job.error = e.what();
      }
    }
  };
  std::vector<std::thread> pool;
  for (unsigned t = 1; t < threads; ++t) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();
}

json gelation_json(const std::vector<Job*>& points) {
  std::vector<const TimeSeries*> runs;
  for (const auto* p : points) runs.push_back(&*p->result);
  try {
    return gelation_scan(runs).to_json();
  } catch (const InsufficientRuns& e) {
    GelationVerdict v;
    for (const auto* r : runs) v.j.push_back(r->j);
    json j = v.to_json();
    j["detail"] = e.what();
    return j;
  }
}

TimeSeries load_run(const fs::path& dir, ExperimentConfig& cfg_out) {
  std::istringstream cfg_text(read_file(dir / "config.ini"));
  cfg_out = parse_config(cfg_text, dir);
  const auto spec = validate(cfg_out.run.spec);
  const auto d = derive_constants(spec, cfg_out.run.m0, cfg_out.run.m1);
  TrackedExponents e{d.m0, d.m1, spec.lambda(), 2.0 * spec.lambda() - spec.alpha(), spec.alpha(),
                     {}};
  std::istringstream csv(read_file(dir / "timeseries.csv"));
  auto ts = time_series_from_csv(read_csv(csv), e);
  std::istringstream fin(read_file(dir / "final_snapshot.txt"));
  const State final_state = read_snapshot(fin);
  ts.grid = final_state.grid;
  ts.j = cfg_out.run.trunc.threshold(*ts.grid);
  ts.rel_tol = cfg_out.run.rel_tol;

  std::vector<State> snaps;
  if (fs::is_directory(dir / "snapshots")) {
    std::vector<fs::path> files;
    for (const auto& entry : fs::directory_iterator(dir / "snapshots"))
      if (entry.path().extension() == ".txt") files.push_back(entry.path());
    std::sort(files.begin(), files.end());
    for (const auto& f : files) {
      std::istringstream in(read_file(f));
      snaps.push_back(read_snapshot(in));
    }
  }
  snaps.push_back(final_state);
  for (auto& s : snaps) {
    if (!(*s.grid == *ts.grid)) throw ParseError("snapshot grid differs from final snapshot");
    for (auto& r : ts.records)
      if (r.t == s.time && !r.snapshot) r.snapshot = s;
  }
  return ts;
}

}  // namespace

int cmd_validate(const Options& opt, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    if (opt.config.empty()) throw ConfigError("--config is required");
    const auto cfg = load_config(opt.config);
    const auto spec = validate(cfg.run.spec);
    const auto d = derive_constants(spec, cfg.run.m0, cfg.run.m1);
    const double rho = cfg.run.initial.mass;
    out << "valid: lambda=" << g(spec.lambda()) << " alpha=" << g(spec.alpha())
        << " nu=" << g(spec.nu()) << " K0=" << g(spec.K0()) << " a0=" << g(spec.a0()) << '\n';
    out << "b_ln = " << g(d.b_ln) << '\n';
    out << "rho_star = " << g(d.rho_star) << '\n';
    out << "rho = " << g(rho) << '\n';
    out << "delta_rho = " << g(delta_rho(spec, rho)) << '\n';
    out << "m0 window = " << interval_text(d.m0_range) << ", m0 = " << g(d.m0) << '\n';
    out << "m1 window = " << interval_text(d.m1_range) << ", m1 = " << g(d.m1) << '\n';
    if (rho > 0.0 && rho < d.rho_star)
      out << "C1(m1) = " << g(lemma_c1(spec, d.m1, rho)) << '\n';
    else
      out << "rho >= rho_star: moment estimates do not apply\n";
    out << "grid cells = " << cfg.run.grid.resolved_cells() << '\n';
    return static_cast<int>(kOk);
  });
}

int cmd_run(const Options& opt, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    const auto cfg = load_with_overrides(opt);
    validate(cfg.run.spec);
    const std::string text = format_config(cfg);
    try {
      const auto ts = run(cfg.run);
      write_run(cfg.output_dir, ts, text);
      const auto& b = ts.back();
      out << "t_end = " << g(b.t) << ", steps = " << b.stats.accepted
          << ", rejected = " << b.stats.rejected_error + b.stats.rejected_negative << '\n';
      out << "M_1: " << g(ts.front().moments.at(1.0)) << " -> " << g(b.moments.at(1.0))
          << ", truncation loss = " << g(b.cum_trunc_loss) << '\n';
      out << "wrote " << (cfg.output_dir / "timeseries.csv").string() << '\n';
    } catch (const StepTooSmall& e) {
      write_file_atomic(cfg.output_dir / "abort_snapshot.txt", snapshot_text(e.last_state()));
      throw;
    } catch (const NonFiniteState& e) {
      write_file_atomic(cfg.output_dir / "abort_snapshot.txt", snapshot_text(e.snapshot()));
      throw;
    }
    return static_cast<int>(kOk);
  });
}

int cmd_sweep(const Options& opt, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    const auto cfg = load_with_overrides(opt);
    validate(cfg.run.spec);
    std::vector<Job> jobs;
    auto add = [&](std::optional<double> rho, std::optional<double> j, std::optional<double> cpd,
                   const fs::path& dir) {
      ExperimentConfig point = cfg;
      point.kind = ExperimentKind::Single;
      point.j_list.clear();
      point.rho_list.clear();
      point.cells_per_decade_list.clear();
      point.output_dir = dir;
      if (rho) point.run.initial.mass = *rho;
      if (j) point.run.trunc = TruncationSpec::cutoff(*j);
      if (cpd) {
        point.run.grid.cells_per_decade = *cpd;
        point.run.grid.n_cells = 0;
      }
      Job job;
      job.config = point.run;
      job.config_text = format_config(point);
      job.dir = dir;
      jobs.push_back(std::move(job));
    };

    json summary;
    summary["kind"] = to_string(cfg.kind);
    switch (cfg.kind) {
      case ExperimentKind::Single:
        throw ConfigError("sweep needs experiment.kind = j_sweep, rho_sweep or convergence_study");
      case ExperimentKind::JSweep:
        for (double j : cfg.j_list) add(std::nullopt, j, std::nullopt, cfg.output_dir / ("j_" + g(j)));
        break;
      case ExperimentKind::RhoSweep:
        for (double rho : cfg.rho_list)
          for (double j : cfg.j_list)
            add(rho, j, std::nullopt, cfg.output_dir / ("rho_" + g(rho)) / ("j_" + g(j)));
        break;
      case ExperimentKind::ConvergenceStudy:
        for (double c : cfg.cells_per_decade_list)
          add(std::nullopt, std::nullopt, c, cfg.output_dir / ("cpd_" + g(c)));
        break;
    }
    run_pool(jobs, opt.threads);

    bool failed = false;
    for (const auto& job : jobs) {
      if (!job.error.empty()) {
        err << "run in " << job.dir.string() << " failed: " << job.error << '\n';
        failed = true;
      }
    }
    if (failed) return static_cast<int>(kRuntimeAbort);

    if (cfg.kind == ExperimentKind::ConvergenceStudy) {
      const State& finest = *jobs.back().result->back().snapshot;
      json rows = json::array();
      double prev = 0.0;
      for (std::size_t k = 0; k + 1 < jobs.size(); ++k) {
        const State& s = *jobs[k].result->back().snapshot;
        const double e = relative_l1(s, transfer(finest, s.grid));
        json row{{"cells_per_decade", cfg.cells_per_decade_list[k]}, {"relative_l1", e}};
        if (k > 0) row["ratio"] = prev / e;
        rows.push_back(row);
        prev = e;
        out << "cells/decade " << g(cfg.cells_per_decade_list[k]) << ": L1 vs finest = " << g(e, 6)
            << '\n';
      }
      summary["convergence"] = rows;
    } else {
      json points = json::array();
      const std::vector<double> rhos =
          cfg.kind == ExperimentKind::RhoSweep ? cfg.rho_list
                                               : std::vector<double>{cfg.run.initial.mass};
      const std::size_t per = cfg.j_list.size();
      for (std::size_t r = 0; r < rhos.size(); ++r) {
        std::vector<Job*> group;
        for (std::size_t k = 0; k < per; ++k) group.push_back(&jobs[r * per + k]);
        json v = gelation_json(group);
        v["rho"] = rhos[r];
        out << "rho = " << g(rhos[r]) << ": " << v["verdict"].get<std::string>() << '\n';
        points.push_back(v);
      }
      summary["points"] = points;
    }
    write_file_atomic(cfg.output_dir / "sweep.json", summary.dump(2) + "\n");
    return static_cast<int>(kOk);
  });
}

int cmd_check(const Options& opt, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    std::vector<fs::path> dirs = opt.runs;
    if (dirs.empty() && !opt.out.empty()) dirs.push_back(opt.out);
    if (dirs.empty() || dirs.size() > 2) throw ConfigError("check takes one or two run directories");

    ExperimentConfig cfg;
    const auto ts = load_run(dirs[0], cfg);
    const auto spec = validate(cfg.run.spec);
    const double rho = ts.front().moments.at(1.0);
    json verdicts = json::array();
    bool all_pass = true;
    auto emit = [&](const Verdict& v) {
      verdicts.push_back(v.to_json());
      all_pass = all_pass && v.pass;
      out << (v.pass ? "PASS " : "FAIL ") << v.name << "  margin=" << g(v.worst_margin, 4)
          << " at t=" << g(v.worst_time, 6) << (v.detail.empty() ? "" : "  " + v.detail) << '\n';
    };
    auto skip = [&](const std::string& name, const std::string& why) {
      verdicts.push_back(json{{"name", name}, {"skipped", why}});
      out << "SKIP " << name << "  " << why << '\n';
    };

    if (rho > 0.0 && rho < rho_star(spec)) {
      const auto lr = lyapunov_check(ts, ts.exponents.m1, spec, rho);
      emit(lr.verdict);
      emit(lr.integral_bound);
      emit(low_moment_check(ts, ts.exponents.m0, spec));
    } else {
      skip("lyapunov", "initial mass not below rho_star");
      skip("low_moment", "initial mass not below rho_star");
    }
    emit(high_moment_check(ts, ts.exponents.high, spec).verdict);

    if (ts.snapshots().size() >= 3 && cfg.run.snapshot_every > 0.0) {
      const RateEvaluator rates(ts.grid, spec, cfg.run.trunc, cfg.run.coagulation,
                                cfg.run.fragmentation);
      const double tol = 10.0 * ts.rel_tol;
      const auto rep = weak_residual(ts, rates, weak_test_functions(ts.exponents.m1), tol);
      if (rep.quadrature_error > tol)
        skip("weak_residual", "snapshots too sparse for time quadrature (estimated error " +
                                  g(rep.quadrature_error) + ")");
      else
        emit(rep.verdict);
    } else {
      skip("weak_residual", "needs a run with solver.snapshot_every > 0");
    }

    if (dirs.size() == 2) {
      ExperimentConfig cfg2;
      const auto ts2 = load_run(dirs[1], cfg2);
      emit(contraction_check(ts, ts2, spec).verdict);
    }

    const fs::path target = (!opt.runs.empty() && !opt.out.empty()) ? opt.out : dirs[0];
    write_file_atomic(target / "verdicts.json", verdicts.dump(2) + "\n");
    return static_cast<int>(all_pass ? kOk : kCheckFailure);
  });
}

int main(int argc, char** argv) {
  CLI::App app{"Coagulation-fragmentation solver with moment and stability diagnostics"};
  app.require_subcommand(1);
  Options opt;
  double snap = -1.0;

  auto* validate_cmd = app.add_subcommand("validate", "Check the model and print derived constants");
  validate_cmd->add_option("--config", opt.config, "Config file")->required();

  auto* run_cmd = app.add_subcommand("run", "Integrate one configuration");
  run_cmd->add_option("--config", opt.config, "Config file")->required();
  run_cmd->add_option("--out", opt.out, "Output directory");
  run_cmd->add_option("--snapshot-every", snap, "Snapshot interval (0: sparse schedule)");

  auto* sweep_cmd = app.add_subcommand("sweep", "j, rho or resolution sweep");
  sweep_cmd->add_option("--config", opt.config, "Config file")->required();
  sweep_cmd->add_option("--out", opt.out, "Output directory");
  sweep_cmd->add_option("--threads", opt.threads, "Worker threads (0: all cores)");
  sweep_cmd->add_option("--snapshot-every", snap, "Snapshot interval (0: sparse schedule)");

  auto* check_cmd = app.add_subcommand("check", "Run diagnostics on one or two run directories");
  check_cmd->add_option("runs", opt.runs, "Run directories")->expected(0, 2);
  check_cmd->add_option("--out", opt.out, "Run directory, or where verdicts.json goes");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : static_cast<int>(kValidationFailure);
  }
  if (snap >= 0.0) opt.snapshot_every = snap;

  if (validate_cmd->parsed()) return cmd_validate(opt, std::cout, std::cerr);
  if (run_cmd->parsed()) return cmd_run(opt, std::cout, std::cerr);
  if (sweep_cmd->parsed()) return cmd_sweep(opt, std::cout, std::cerr);
  return cmd_check(opt, std::cout, std::cerr);
}

}  // namespace coagfrag::cli
