#include "cpt/scenario.hpp"

#include "cpt/evolution.hpp"
#include "cpt/noise_mc.hpp"
#include "cpt/spectra.hpp"
#include "cpt/version.hpp"

#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <mutex>
#include <thread>

namespace cpt {

namespace {

constexpr std::uint64_t kDefaultSeed = 12345;

std::string fmt12(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.12g", v);
    return buf;
}

std::string fmt_short(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%g", v);
    return buf;
}

double auto_spectrum_tol(const SystemParams& p) {
    return 1e-8 * std::max({p.kappa, p.coupling_j, 1e-4});
}

int regime_code(Regime r) {
    switch (r) {
        case Regime::all_oscillatory: return 0;
        case Regime::mixed: return 1;
        case Regime::fully_broken: return 2;
        case Regime::at_exceptional_point: return 3;
    }
    return -1;
}

Json regime_legend() {
    return Json{{"0", "all_oscillatory"},
                {"1", "mixed"},
                {"2", "fully_broken"},
                {"3", "at_exceptional_point"}};
}

Json spectral_metadata(const SystemParams& p) {
    Json m;
    m["regime"] = to_string(classify_regime(p, auto_spectrum_tol(p)));
    const ExceptionalPointSet eps = exceptional_points(p);
    Json pts = Json::array();
    for (const ExceptionalPoint& ep : eps.points)
        pts.push_back(Json{{"j_over_kappa", ep.j_over_kappa},
                           {"family", ep.merging_eigenvalue_family}});
    m["exceptional_points"] = pts;
    if (!eps.parameter_independent_families.empty())
        m["parameter_independent_families"] = eps.parameter_independent_families;
    return m;
}

// Column store with stable indices (references into a growing vector would
// dangle).
struct Table {
    std::vector<std::string> names;
    std::vector<std::vector<double>> cols;

    std::size_t add(std::string name) {
        names.push_back(std::move(name));
        cols.emplace_back();
        return cols.size() - 1;
    }
    std::vector<double>& operator[](std::size_t i) { return cols[i]; }
};

double opt_value(const std::optional<double>& v) {
    return v ? *v : std::numeric_limits<double>::quiet_NaN();
}

void parallel_for(int n, int n_threads, const std::function<void(int)>& fn) {
    int workers =
        n_threads > 0 ? n_threads : static_cast<int>(std::thread::hardware_concurrency());
    workers = std::clamp(workers, 1, std::max(1, n));
    if (workers <= 1 || n <= 1) {
        for (int i = 0; i < n; ++i) fn(i);
        return;
    }
    std::atomic<int> next{0};
    std::exception_ptr error;
    std::mutex error_mutex;
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(workers));
    for (int w = 0; w < workers; ++w) {
        pool.emplace_back([&] {
            for (int i = next.fetch_add(1); i < n; i = next.fetch_add(1)) {
                try {
                    fn(i);
                } catch (...) {
                    std::lock_guard lock(error_mutex);
                    if (!error) error = std::current_exception();
                }
            }
        });
    }
    for (auto& th : pool) th.join();
    if (error) std::rethrow_exception(error);
}

int resolve_backward_site(const ScenarioConfig& cfg) {
    return cfg.recip_site_bwd < 0 ? cfg.system.total_sites() - 1 : cfg.recip_site_bwd;
}

SystemParams with_j_ratio(SystemParams p, double j_over_kappa) {
    p.coupling_j = j_over_kappa * p.kappa;
    return p;
}

// ---------------------------- scenario runners -------------------------------

void run_spectrum(const ScenarioConfig& cfg, Table& table, Json& meta) {
    const DynamicalMatrix m = build_matrix(cfg.system);
    const double tol = cfg.spectrum_tol > 0.0 ? cfg.spectrum_tol : auto_spectrum_tol(cfg.system);
    const SpectrumReport rep = numerical_spectrum(m, tol);

    const auto c_re = table.add("lambda_re");
    const auto c_im = table.add("lambda_im");
    const auto c_m = table.add("multiplicity");
    const auto c_g = table.add("geometric_multiplicity");
    const auto c_d = table.add("defective");
    for (const EigenFamily& f : rep.eigenpairs) {
        table[c_re].push_back(f.lambda.real());
        table[c_im].push_back(f.lambda.imag());
        table[c_m].push_back(f.multiplicity);
        table[c_g].push_back(f.geometric_multiplicity);
        table[c_d].push_back(f.defective ? 1.0 : 0.0);
    }
    meta.update(spectral_metadata(cfg.system));
    meta["regime"] = to_string(rep.regime);  // as classified from the computed spectrum
    meta["is_defective"] = rep.is_defective;
    meta["clustering_tol"] = tol;
}

void run_evolve(const ScenarioConfig& cfg, Table& table, Json& meta) {
    const auto series = evolve_moments(cfg.system, cfg.time_grid.t_final, cfg.time_grid.dt_out);
    const int n = cfg.system.total_sites();

    const auto c_t = table.add("t");
    std::vector<std::size_t> c_n(static_cast<std::size_t>(n));
    for (int k = 0; k < n; ++k) c_n[static_cast<std::size_t>(k)] = table.add("n_" + site_label(k));
    const auto c_tot = table.add("n_total");
    std::vector<std::size_t> c_flux;
    if (cfg.system.gamma_out > 0.0)
        for (int k = 0; k < n; ++k) c_flux.push_back(table.add("flux_" + site_label(k)));

    for (const MomentState& s : series) {
        table[c_t].push_back(s.time);
        const Eigen::VectorXd ph = photon_numbers(s);
        for (int k = 0; k < n; ++k) table[c_n[static_cast<std::size_t>(k)]].push_back(ph(k));
        table[c_tot].push_back(ph.sum());
        if (!c_flux.empty()) {
            const Eigen::VectorXd flux = output_flux(s, cfg.system);
            for (int k = 0; k < n; ++k) table[c_flux[static_cast<std::size_t>(k)]].push_back(flux(k));
        }
    }

    meta.update(spectral_metadata(cfg.system));
    if (cfg.system.gamma_out > 0.0 && cfg.system.drive.amplitude_e > 0.0)
        meta["notes"] = Json::array({kDrivenSiteFluxCaveat});
    if (cfg.saturation.i_sat > 0.0) {
        const auto violations =
            saturation_check(series, cfg.saturation.i_sat, cfg.saturation.threshold);
        Json sat;
        sat["violation_count"] = violations.size();
        if (!violations.empty())
            sat["first_violation"] = Json{{"time", violations.front().time},
                                          {"site", site_label(violations.front().site)},
                                          {"intensity_ratio", violations.front().intensity_ratio}};
        meta["saturation"] = sat;
    }
}

void run_contrast(const ScenarioConfig& cfg, Table& table, Json& meta) {
    const auto series = evolve_moments(cfg.system, cfg.time_grid.t_final, cfg.time_grid.dt_out);
    const int i = cfg.contrast_site_i;
    const int j = cfg.contrast_site_j;

    const auto c_t = table.add("t");
    const auto c_ni = table.add("n_" + site_label(i));
    const auto c_nj = table.add("n_" + site_label(j));
    const auto c_c = table.add("contrast_" + site_label(i) + "_" + site_label(j));
    for (const MomentState& s : series) {
        table[c_t].push_back(s.time);
        table[c_ni].push_back(s.corr(i, i).real());
        table[c_nj].push_back(s.corr(j, j).real());
        table[c_c].push_back(opt_value(average_contrast(s, i, j)));
    }
    meta.update(spectral_metadata(cfg.system));
}

void run_reciprocity(const ScenarioConfig& cfg, Table& table, Json& meta) {
    const int fwd = cfg.recip_site_fwd;
    const int bwd = resolve_backward_site(cfg);
    const auto points = reciprocity_experiment(cfg.system, fwd, bwd, cfg.time_grid.t_final,
                                               cfg.time_grid.dt_out);
    const auto c_t = table.add("t");
    const auto c_f = table.add("p_forward");
    const auto c_b = table.add("p_backward");
    const auto c_d = table.add("abs_difference");
    for (const ReciprocityPoint& p : points) {
        table[c_t].push_back(p.time);
        table[c_f].push_back(p.p_forward);
        table[c_b].push_back(p.p_backward);
        table[c_d].push_back(p.abs_difference);
    }
    meta.update(spectral_metadata(cfg.system));
    meta["site_forward"] = site_label(fwd);
    meta["site_backward"] = site_label(bwd);
}

void run_sweep(const ScenarioConfig& cfg, Table& table, Json& meta) {
    const SweepSpec& sweep = *cfg.sweep;
    const int n = cfg.system.total_sites();
    const int n_values = static_cast<int>(sweep.values.size());

    struct Row {
        Eigen::VectorXd photons;
        double contrast = 0.0;
        int regime = 0;
    };
    std::vector<Row> rows(static_cast<std::size_t>(n_values));

    parallel_for(n_values, cfg.threads, [&](int i) {
        SystemParams p = cfg.system;
        const double v = sweep.values[static_cast<std::size_t>(i)];
        if (sweep.parameter == "j_over_kappa")
            p.coupling_j = v * p.kappa;
        else if (sweep.parameter == "e_over_kappa")
            p.drive.amplitude_e = v * p.kappa;
        else
            p.drive.detuning_delta = v * p.kappa;
        const std::vector<double> stop{cfg.time_grid.t_final};
        const auto states = evolve_moments_at(p, stop, MomentState::vacuum(n));
        Row& row = rows[static_cast<std::size_t>(i)];
        row.photons = photon_numbers(states.back());
        row.contrast = opt_value(average_contrast(states.back(), 0, 1));
        row.regime = regime_code(classify_regime(p, auto_spectrum_tol(p)));
    });

    const auto c_v = table.add(sweep.parameter);
    std::vector<std::size_t> c_n(static_cast<std::size_t>(n));
    for (int k = 0; k < n; ++k) c_n[static_cast<std::size_t>(k)] = table.add("n_" + site_label(k));
    const auto c_tot = table.add("n_total");
    const auto c_c = table.add("contrast_a1_b1");
    const auto c_r = table.add("regime_code");
    for (int i = 0; i < n_values; ++i) {
        const Row& row = rows[static_cast<std::size_t>(i)];
        table[c_v].push_back(sweep.values[static_cast<std::size_t>(i)]);
        for (int k = 0; k < n; ++k)
            table[c_n[static_cast<std::size_t>(k)]].push_back(row.photons(k));
        table[c_tot].push_back(row.photons.sum());
        table[c_c].push_back(row.contrast);
        table[c_r].push_back(row.regime);
    }
    meta["sweep_parameter"] = sweep.parameter;
    meta["evaluated_at_t"] = cfg.time_grid.t_final;
    meta["regime_code_legend"] = regime_legend();
}

void run_mc(const ScenarioConfig& cfg, Table& table, Json& meta) {
    const std::uint64_t seed = cfg.seed.value_or(kDefaultSeed);
    const TrajectoryEnsemble ens =
        sample_trajectories(cfg.system, cfg.time_grid.t_final, cfg.mc.dt, cfg.mc.n_traj, seed,
                            cfg.mc.record_stride, cfg.threads);
    const auto ref = evolve_moments_at(cfg.system, ens.times,
                                       MomentState::vacuum(cfg.system.total_sites()));
    const McComparison cmp = compare_to_deterministic(ens, ref);

    const int n = cfg.system.total_sites();
    const auto c_t = table.add("t");
    std::vector<std::size_t> c_mc, c_se, c_ode, c_z;
    for (int k = 0; k < n; ++k) {
        const std::string l = site_label(k);
        c_mc.push_back(table.add("n_" + l + "_mc"));
        c_se.push_back(table.add("n_" + l + "_se"));
        c_ode.push_back(table.add("n_" + l + "_ode"));
        c_z.push_back(table.add("z_" + l));
    }
    for (std::size_t i = 0; i < ens.times.size(); ++i) {
        const auto row = static_cast<Eigen::Index>(i);
        table[c_t].push_back(ens.times[i]);
        for (int k = 0; k < n; ++k) {
            table[c_mc[static_cast<std::size_t>(k)]].push_back(ens.photon(row, k));
            table[c_se[static_cast<std::size_t>(k)]].push_back(ens.photon_se(row, k));
            table[c_ode[static_cast<std::size_t>(k)]].push_back(ref[i].corr(k, k).real());
            table[c_z[static_cast<std::size_t>(k)]].push_back(cmp.z(row, k));
        }
    }
    meta.update(spectral_metadata(cfg.system));
    meta["n_traj"] = cfg.mc.n_traj;
    meta["dt"] = cfg.mc.dt;
    meta["record_stride"] = cfg.mc.record_stride;
    meta["seed"] = seed;
    meta["max_abs_z"] = cmp.max_abs_z;
    meta["fraction_within_3se"] = cmp.fraction_within_3se;
}

void run_fig2(const ScenarioConfig& cfg, Table& table, Json& meta) {
    const auto series = evolve_moments(cfg.system, cfg.time_grid.t_final, cfg.time_grid.dt_out);
    const auto c_t = table.add("t");
    const auto c_na1 = table.add("n_a1");
    const auto c_nb1 = table.add("n_b1");
    const auto c_na2 = table.add("n_a2");
    const auto c_nb2 = table.add("n_b2");
    const auto c_c1 = table.add("contrast_a1_b1");
    const auto c_c2 = table.add("contrast_a2_b2");
    for (const MomentState& s : series) {
        table[c_t].push_back(s.time);
        table[c_na1].push_back(s.corr(0, 0).real());
        table[c_nb1].push_back(s.corr(1, 1).real());
        table[c_na2].push_back(s.corr(2, 2).real());
        table[c_nb2].push_back(s.corr(3, 3).real());
        table[c_c1].push_back(opt_value(average_contrast(s, 0, 1)));
        table[c_c2].push_back(opt_value(average_contrast(s, 2, 3)));
    }
    meta.update(spectral_metadata(cfg.system));
}

// Figs. 3 and 4: photon numbers of b1 and a2 plus the two contrasts, for a
// pair of coupling ratios.
void run_fig34(const ScenarioConfig& cfg, const std::array<double, 2>& ratios, Table& table,
               Json& meta) {
    std::array<std::vector<MomentState>, 2> series;
    parallel_for(2, cfg.threads, [&](int i) {
        series[static_cast<std::size_t>(i)] =
            evolve_moments(with_j_ratio(cfg.system, ratios[static_cast<std::size_t>(i)]),
                           cfg.time_grid.t_final, cfg.time_grid.dt_out);
    });

    const auto c_t = table.add("t");
    for (const MomentState& s : series[0]) table[c_t].push_back(s.time);
    for (std::size_t r = 0; r < 2; ++r) {
        const std::string suffix = "_j" + fmt_short(ratios[r]);
        const auto c_nb1 = table.add("n_b1" + suffix);
        const auto c_na2 = table.add("n_a2" + suffix);
        const auto c_c1 = table.add("contrast_a1_b1" + suffix);
        const auto c_c2 = table.add("contrast_a2_b2" + suffix);
        for (const MomentState& s : series[r]) {
            table[c_nb1].push_back(s.corr(1, 1).real());
            table[c_na2].push_back(s.corr(2, 2).real());
            table[c_c1].push_back(opt_value(average_contrast(s, 0, 1)));
            table[c_c2].push_back(opt_value(average_contrast(s, 2, 3)));
        }
    }
    Json ratios_json = Json::array({ratios[0], ratios[1]});
    meta["j_over_kappa_curves"] = ratios_json;
    meta["exceptional_points"] = spectral_metadata(cfg.system)["exceptional_points"];
}

void run_fig5(const ScenarioConfig& cfg, bool contrast_panel, Table& table, Json& meta) {
    const std::vector<double>& values = cfg.sweep->values;
    const int n_values = static_cast<int>(values.size());
    std::vector<double> snapshots = cfg.snapshot_times;
    std::sort(snapshots.begin(), snapshots.end());
    if (!contrast_panel) snapshots = {cfg.time_grid.t_final};

    std::vector<std::vector<double>> results(static_cast<std::size_t>(n_values));
    std::vector<int> regimes(static_cast<std::size_t>(n_values));
    parallel_for(n_values, cfg.threads, [&](int i) {
        const SystemParams p = with_j_ratio(cfg.system, values[static_cast<std::size_t>(i)]);
        const auto states = evolve_moments_at(p, snapshots, MomentState::vacuum(p.total_sites()));
        auto& out = results[static_cast<std::size_t>(i)];
        for (const MomentState& s : states)
            out.push_back(contrast_panel ? opt_value(average_contrast(s, 0, 1))
                                         : s.corr(1, 1).real());
        regimes[static_cast<std::size_t>(i)] = regime_code(classify_regime(p, auto_spectrum_tol(p)));
    });

    const auto c_v = table.add("j_over_kappa");
    std::vector<std::size_t> c_obs;
    if (contrast_panel) {
        for (double ts : snapshots) c_obs.push_back(table.add("contrast_a1_b1_kt" + fmt_short(ts)));
    } else {
        c_obs.push_back(table.add("n_b1"));
    }
    const auto c_r = table.add("regime_code");
    for (int i = 0; i < n_values; ++i) {
        table[c_v].push_back(values[static_cast<std::size_t>(i)]);
        for (std::size_t s = 0; s < c_obs.size(); ++s)
            table[c_obs[s]].push_back(results[static_cast<std::size_t>(i)][s]);
        table[c_r].push_back(regimes[static_cast<std::size_t>(i)]);
    }

    Json boundaries = Json::array();
    for (const ExceptionalPoint& ep : exceptional_points(cfg.system).points)
        boundaries.push_back(ep.j_over_kappa);
    meta["regime_boundaries"] = boundaries;
    meta["regime_code_legend"] = regime_legend();
    if (contrast_panel)
        meta["snapshot_times"] = snapshots;
    else
        meta["evaluated_at_t"] = cfg.time_grid.t_final;
}

void run_fig6(const ScenarioConfig& cfg, Table& table, Json& meta) {
    const int fwd = cfg.recip_site_fwd;
    const int bwd = resolve_backward_site(cfg);
    SystemParams noisy = cfg.system;
    noisy.noise_enabled = true;
    SystemParams clean = cfg.system;
    clean.noise_enabled = false;

    std::array<std::vector<ReciprocityPoint>, 2> runs;
    parallel_for(2, cfg.threads, [&](int i) {
        runs[static_cast<std::size_t>(i)] =
            reciprocity_experiment(i == 0 ? noisy : clean, fwd, bwd, cfg.time_grid.t_final,
                                   cfg.time_grid.dt_out);
    });

    const auto c_t = table.add("t");
    const auto c_d = table.add("abs_difference");
    const auto c_f = table.add("p_forward_noiseless");
    const auto c_b = table.add("p_backward_noiseless");
    for (std::size_t i = 0; i < runs[0].size(); ++i) {
        table[c_t].push_back(runs[0][i].time);
        table[c_d].push_back(runs[0][i].abs_difference);
        table[c_f].push_back(runs[1][i].p_forward);
        table[c_b].push_back(runs[1][i].p_backward);
    }
    meta.update(spectral_metadata(cfg.system));
    meta["site_forward"] = site_label(fwd);
    meta["site_backward"] = site_label(bwd);
    meta["notes"] = Json::array(
        {"abs_difference is |n(site_backward)_fwd - n(site_forward)_bwd| with "
         "amplification noise on; the noiseless columns coincide by reciprocity"});
}

}  // namespace

// ------------------------------- public API ----------------------------------

std::string to_string(ScenarioKind kind) {
    switch (kind) {
        case ScenarioKind::spectrum: return "spectrum";
        case ScenarioKind::evolve: return "evolve";
        case ScenarioKind::contrast: return "contrast";
        case ScenarioKind::reciprocity: return "reciprocity";
        case ScenarioKind::sweep: return "sweep";
        case ScenarioKind::mc: return "mc";
        case ScenarioKind::figure_preset: return "figure-preset";
    }
    return "unknown";
}

std::string to_string(OutputFormat format) {
    return format == OutputFormat::csv ? "csv" : "json";
}

namespace {

ScenarioKind scenario_from_string(const std::string& s) {
    if (s == "spectrum") return ScenarioKind::spectrum;
    if (s == "evolve") return ScenarioKind::evolve;
    if (s == "contrast") return ScenarioKind::contrast;
    if (s == "reciprocity") return ScenarioKind::reciprocity;
    if (s == "sweep") return ScenarioKind::sweep;
    if (s == "mc") return ScenarioKind::mc;
    if (s == "figure-preset") return ScenarioKind::figure_preset;
    throw ConfigError("scenario", "unknown scenario '" + s + "'");
}

OutputFormat format_from_string(const std::string& s) {
    if (s == "csv") return OutputFormat::csv;
    if (s == "json") return OutputFormat::json;
    throw ConfigError("output.format", "unknown format '" + s + "'");
}

bool known_preset(const std::string& s) {
    return s == "fig2" || s == "fig3" || s == "fig4" || s == "fig5a" || s == "fig5b" ||
           s == "fig6";
}

void require_keys(const Json& j, const std::string& where,
                  std::initializer_list<const char*> allowed) {
    for (auto it = j.begin(); it != j.end(); ++it) {
        bool ok = false;
        for (const char* k : allowed)
            if (it.key() == k) {
                ok = true;
                break;
            }
        if (!ok)
            throw ConfigError(where.empty() ? it.key() : where + "." + it.key(), "unknown key");
    }
}

template <typename T>
void read_field(const Json& j, const std::string& where, const char* key, T& out) {
    if (!j.contains(key)) return;
    try {
        out = j.at(key).get<T>();
    } catch (const Json::exception& e) {
        throw ConfigError(where.empty() ? key : where + "." + key, e.what());
    }
}

}  // namespace

void ScenarioConfig::validate() const {
    try {
        system.validate();
    } catch (const std::invalid_argument& e) {
        throw ConfigError("system", e.what());
    }
    if (!(time_grid.t_final > 0.0))
        throw ConfigError("time_grid.t_final", "must be > 0");
    if (!(time_grid.dt_out > 0.0) || time_grid.dt_out > time_grid.t_final)
        throw ConfigError("time_grid.dt_out", "must be in (0, t_final]");

    const int n = system.total_sites();
    if (scenario == ScenarioKind::sweep || scenario == ScenarioKind::figure_preset) {
        const bool needs_sweep = scenario == ScenarioKind::sweep || preset == "fig5a" ||
                                 preset == "fig5b";
        if (needs_sweep) {
            if (!sweep) throw ConfigError("sweep", "required for this scenario");
            if (sweep->parameter != "j_over_kappa" && sweep->parameter != "e_over_kappa" &&
                sweep->parameter != "delta_over_kappa")
                throw ConfigError("sweep.parameter",
                                  "must be j_over_kappa, e_over_kappa, or delta_over_kappa");
            for (double v : sweep->values) {
                if (!std::isfinite(v)) throw ConfigError("sweep.values", "must be finite");
                if (sweep->parameter != "delta_over_kappa" && v < 0.0)
                    throw ConfigError("sweep.values", "rates must be >= 0");
            }
        }
    }
    if (scenario == ScenarioKind::figure_preset && !known_preset(preset))
        throw ConfigError("preset", "unknown preset '" + preset + "'");
    if (scenario == ScenarioKind::contrast) {
        if (contrast_site_i < 0 || contrast_site_i >= n)
            throw ConfigError("contrast_sites.i", "out of range");
        if (contrast_site_j < 0 || contrast_site_j >= n)
            throw ConfigError("contrast_sites.j", "out of range");
        if (contrast_site_i == contrast_site_j)
            throw ConfigError("contrast_sites", "sites must differ");
    }
    if (scenario == ScenarioKind::reciprocity || preset == "fig6") {
        if (recip_site_fwd < 0 || recip_site_fwd >= n || recip_site_fwd % 2 != 0)
            throw ConfigError("reciprocity_sites.forward", "must be a gain site");
        const int bwd = recip_site_bwd < 0 ? n - 1 : recip_site_bwd;
        if (bwd >= n || bwd % 2 != 1)
            throw ConfigError("reciprocity_sites.backward", "must be a loss site");
    }
    if (scenario == ScenarioKind::mc) {
        if (mc.n_traj < 1) throw ConfigError("mc.n_traj", "must be >= 1");
        if (!(mc.dt > 0.0)) throw ConfigError("mc.dt", "must be > 0");
        if (mc.record_stride < 1) throw ConfigError("mc.record_stride", "must be >= 1");
    }
    if (preset == "fig5b") {
        if (snapshot_times.empty()) throw ConfigError("snapshot_times", "must not be empty");
        for (double t : snapshot_times)
            if (!(t > 0.0)) throw ConfigError("snapshot_times", "must be > 0");
    }
    if (saturation.i_sat > 0.0 &&
        !(saturation.threshold > 0.0 && saturation.threshold < 1.0))
        throw ConfigError("saturation.threshold", "must be in (0, 1)");
    if (threads < 0) throw ConfigError("threads", "must be >= 0");
}

Json config_to_json(const ScenarioConfig& c) {
    Json j;
    j["system"] = Json{{"n_pairs", c.system.n_pairs},
                       {"kappa", c.system.kappa},
                       {"coupling_j", c.system.coupling_j},
                       {"gamma_out", c.system.gamma_out},
                       {"noise_enabled", c.system.noise_enabled},
                       {"drive", Json{{"site_index", c.system.drive.site_index},
                                      {"amplitude_e", c.system.drive.amplitude_e},
                                      {"detuning_delta", c.system.drive.detuning_delta}}}};
    j["scenario"] = to_string(c.scenario);
    if (c.scenario == ScenarioKind::figure_preset) j["preset"] = c.preset;
    j["time_grid"] = Json{{"t_final", c.time_grid.t_final}, {"dt_out", c.time_grid.dt_out}};
    if (c.sweep)
        j["sweep"] = Json{{"parameter", c.sweep->parameter}, {"values", c.sweep->values}};
    j["output"] = Json{{"path", c.output.path}, {"format", to_string(c.output.format)}};
    if (c.seed) j["seed"] = *c.seed;
    j["contrast_sites"] = Json{{"i", c.contrast_site_i}, {"j", c.contrast_site_j}};
    j["reciprocity_sites"] = Json{{"forward", c.recip_site_fwd}, {"backward", c.recip_site_bwd}};
    j["mc"] = Json{{"n_traj", c.mc.n_traj}, {"dt", c.mc.dt}, {"record_stride", c.mc.record_stride}};
    j["snapshot_times"] = c.snapshot_times;
    j["saturation"] = Json{{"i_sat", c.saturation.i_sat}, {"threshold", c.saturation.threshold}};
    j["spectrum_tol"] = c.spectrum_tol;
    j["threads"] = c.threads;
    return j;
}

ScenarioConfig config_from_json(const Json& j) {
    ScenarioConfig c;
    require_keys(j, "", {"system", "scenario", "preset", "time_grid", "sweep", "output", "seed",
                         "contrast_sites", "reciprocity_sites", "mc", "snapshot_times",
                         "saturation", "spectrum_tol", "threads"});
    if (j.contains("system")) {
        const Json& s = j.at("system");
        require_keys(s, "system",
                     {"n_pairs", "kappa", "coupling_j", "gamma_out", "noise_enabled", "drive"});
        read_field(s, "system", "n_pairs", c.system.n_pairs);
        read_field(s, "system", "kappa", c.system.kappa);
        read_field(s, "system", "coupling_j", c.system.coupling_j);
        read_field(s, "system", "gamma_out", c.system.gamma_out);
        read_field(s, "system", "noise_enabled", c.system.noise_enabled);
        if (s.contains("drive")) {
            const Json& d = s.at("drive");
            require_keys(d, "system.drive", {"site_index", "amplitude_e", "detuning_delta"});
            read_field(d, "system.drive", "site_index", c.system.drive.site_index);
            read_field(d, "system.drive", "amplitude_e", c.system.drive.amplitude_e);
            read_field(d, "system.drive", "detuning_delta", c.system.drive.detuning_delta);
        }
    }
    std::string scenario_name = to_string(c.scenario);
    read_field(j, "", "scenario", scenario_name);
    c.scenario = scenario_from_string(scenario_name);
    read_field(j, "", "preset", c.preset);
    if (j.contains("time_grid")) {
        const Json& t = j.at("time_grid");
        require_keys(t, "time_grid", {"t_final", "dt_out"});
        read_field(t, "time_grid", "t_final", c.time_grid.t_final);
        read_field(t, "time_grid", "dt_out", c.time_grid.dt_out);
    }
    if (j.contains("sweep") && !j.at("sweep").is_null()) {
        const Json& s = j.at("sweep");
        require_keys(s, "sweep", {"parameter", "values"});
        SweepSpec spec;
        read_field(s, "sweep", "parameter", spec.parameter);
        read_field(s, "sweep", "values", spec.values);
        c.sweep = std::move(spec);
    }
    if (j.contains("output")) {
        const Json& o = j.at("output");
        require_keys(o, "output", {"path", "format"});
        read_field(o, "output", "path", c.output.path);
        std::string format_name = to_string(c.output.format);
        read_field(o, "output", "format", format_name);
        c.output.format = format_from_string(format_name);
    }
    if (j.contains("seed") && !j.at("seed").is_null()) {
        std::uint64_t seed = 0;
        read_field(j, "", "seed", seed);
        c.seed = seed;
    }
    if (j.contains("contrast_sites")) {
        const Json& s = j.at("contrast_sites");
        require_keys(s, "contrast_sites", {"i", "j"});
        read_field(s, "contrast_sites", "i", c.contrast_site_i);
        read_field(s, "contrast_sites", "j", c.contrast_site_j);
    }
    if (j.contains("reciprocity_sites")) {
        const Json& s = j.at("reciprocity_sites");
        require_keys(s, "reciprocity_sites", {"forward", "backward"});
        read_field(s, "reciprocity_sites", "forward", c.recip_site_fwd);
        read_field(s, "reciprocity_sites", "backward", c.recip_site_bwd);
    }
    if (j.contains("mc")) {
        const Json& s = j.at("mc");
        require_keys(s, "mc", {"n_traj", "dt", "record_stride"});
        read_field(s, "mc", "n_traj", c.mc.n_traj);
        read_field(s, "mc", "dt", c.mc.dt);
        read_field(s, "mc", "record_stride", c.mc.record_stride);
    }
    read_field(j, "", "snapshot_times", c.snapshot_times);
    if (j.contains("saturation")) {
        const Json& s = j.at("saturation");
        require_keys(s, "saturation", {"i_sat", "threshold"});
        read_field(s, "saturation", "i_sat", c.saturation.i_sat);
        read_field(s, "saturation", "threshold", c.saturation.threshold);
    }
    read_field(j, "", "spectrum_tol", c.spectrum_tol);
    read_field(j, "", "threads", c.threads);
    return c;
}

ScenarioConfig preset_config(const std::string& name) {
    if (!known_preset(name)) throw ConfigError("preset", "unknown preset '" + name + "'");

    ScenarioConfig c;
    c.scenario = ScenarioKind::figure_preset;
    c.preset = name;
    c.system.n_pairs = 3;
    c.system.kappa = 1.0;
    c.system.drive.site_index = 0;
    c.system.drive.detuning_delta = 0.0;
    c.system.noise_enabled = false;
    c.time_grid = {8.0, 0.01};
    c.output.path = name + ".csv";

    if (name == "fig2") {
        c.system.coupling_j = 2.5;
        c.system.drive.amplitude_e = 20.0;
    } else if (name == "fig3") {
        c.system.coupling_j = 0.6;  // curves at 0.6 and 0.7
        c.system.drive.amplitude_e = 20.0;
    } else if (name == "fig4") {
        c.system.coupling_j = 0.4;  // curves at 0.4 and 0.2
        c.system.drive.amplitude_e = 20.0;
    } else if (name == "fig5a" || name == "fig5b") {
        c.system.drive.amplitude_e = 20.0;
        c.system.coupling_j = 1.0;  // overridden per sweep point
        c.time_grid = {20.0, 0.025};
        SweepSpec sweep;
        sweep.parameter = "j_over_kappa";
        for (int i = 1; i <= 60; ++i) sweep.values.push_back(0.05 * i);
        c.sweep = std::move(sweep);
        c.snapshot_times = {10.0, 20.0};
    } else if (name == "fig6") {
        c.system.coupling_j = 1.2;
        c.system.drive.amplitude_e = 5.0;
        c.system.noise_enabled = true;
        c.recip_site_fwd = 0;
        c.recip_site_bwd = -1;
    }
    return c;
}

ScenarioResult run_scenario(const ScenarioConfig& config) {
    config.validate();
    const auto start = std::chrono::steady_clock::now();

    ScenarioResult result;
    result.config = config_to_json(config);
    Table table;
    Json meta;
    meta["tool_version"] = kToolVersion;

    switch (config.scenario) {
        case ScenarioKind::spectrum: run_spectrum(config, table, meta); break;
        case ScenarioKind::evolve: run_evolve(config, table, meta); break;
        case ScenarioKind::contrast: run_contrast(config, table, meta); break;
        case ScenarioKind::reciprocity: run_reciprocity(config, table, meta); break;
        case ScenarioKind::sweep: run_sweep(config, table, meta); break;
        case ScenarioKind::mc: run_mc(config, table, meta); break;
        case ScenarioKind::figure_preset:
            if (config.preset == "fig2")
                run_fig2(config, table, meta);
            else if (config.preset == "fig3")
                run_fig34(config, {0.6, 0.7}, table, meta);
            else if (config.preset == "fig4")
                run_fig34(config, {0.4, 0.2}, table, meta);
            else if (config.preset == "fig5a")
                run_fig5(config, /*contrast_panel=*/false, table, meta);
            else if (config.preset == "fig5b")
                run_fig5(config, /*contrast_panel=*/true, table, meta);
            else
                run_fig6(config, table, meta);
            break;
    }

    result.column_names = std::move(table.names);
    result.columns = std::move(table.cols);
    result.metadata = std::move(meta);
    result.wall_time_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return result;
}

std::string to_csv(const ScenarioResult& result) {
    std::string out;
    out += "# cpt-sim " + std::string(kToolVersion) + "\n";
    out += "# config: " + result.config.dump() + "\n";
    out += "# metadata: " + result.metadata.dump() + "\n";
    for (std::size_t c = 0; c < result.column_names.size(); ++c) {
        if (c) out += ',';
        out += result.column_names[c];
    }
    out += '\n';
    const std::size_t n_rows = result.columns.empty() ? 0 : result.columns[0].size();
    for (std::size_t r = 0; r < n_rows; ++r) {
        for (std::size_t c = 0; c < result.columns.size(); ++c) {
            if (c) out += ',';
            const double v = result.columns[c][r];
            if (!std::isnan(v)) out += fmt12(v);
        }
        out += '\n';
    }
    return out;
}

std::string to_json_text(const ScenarioResult& result) {
    Json doc;
    doc["config"] = result.config;
    Json columns;
    for (std::size_t c = 0; c < result.column_names.size(); ++c)
        columns[result.column_names[c]] = result.columns[c];
    doc["columns"] = columns;
    doc["metadata"] = result.metadata;
    return doc.dump(2) + "\n";
}

void emit(const ScenarioResult& result, const OutputSpec& output) {
    if (output.path.empty()) throw std::runtime_error("emit: output path is empty");
    for (std::size_t c = 1; c < result.columns.size(); ++c)
        if (result.columns[c].size() != result.columns[0].size())
            throw std::runtime_error("emit: ragged columns");
    const std::string text =
        output.format == OutputFormat::csv ? to_csv(result) : to_json_text(result);
    std::ofstream file(output.path, std::ios::binary | std::ios::trunc);
    if (!file) throw std::runtime_error("emit: cannot open '" + output.path + "' for writing");
    file.write(text.data(), static_cast<std::streamsize>(text.size()));
    if (!file) throw std::runtime_error("emit: write failed for '" + output.path + "'");
}

}  // namespace cpt
