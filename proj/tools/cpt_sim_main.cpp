// cpt-sim — batch CLI for spectra, moment evolution, contrasts, reciprocity
// experiments, parameter sweeps, and Monte Carlo cross-checks on rings of
// gain/loss coupled microcavities.
//
//   cpt-sim spectrum --n-pairs 6 --j-over-kappa 0.4 --out spectrum.csv
//   cpt-sim evolve --j-over-kappa 2.5 --e-over-kappa 20 --t-final 8
//   cpt-sim reciprocity --j-over-kappa 0.6 --e-over-kappa 5 --noise
//   cpt-sim sweep --sweep-param j_over_kappa --sweep-values 0.2 0.6 1.2
//   cpt-sim mc --n-traj 10000 --dt 0.001 --seed 7
//   cpt-sim preset fig6 --j-over-kappa 0.6 --out fig6b.csv
//
// Flags override values loaded from --config <file.json>; every result file
// embeds the resolved configuration.

#include "cpt/scenario.hpp"
#include "cpt/system.hpp"
#include "cpt/version.hpp"

#include "CLI11.hpp"

#include <cstdio>
#include <deque>
#include <exception>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

namespace {

struct CommonFlags {
    std::optional<std::string> config_path;
    std::optional<int> n_pairs;
    std::optional<double> kappa;
    std::optional<double> j_over_kappa;
    std::optional<double> e_over_kappa;
    std::optional<double> delta_over_kappa;
    std::optional<std::string> drive_site;
    std::optional<double> gamma_out;
    std::optional<bool> noise;
    std::optional<double> t_final;
    std::optional<double> dt_out;
    std::optional<std::uint64_t> seed;
    std::optional<std::string> out;
    std::optional<std::string> format;
    std::optional<int> threads;
};

void add_common_flags(CLI::App* cmd, CommonFlags& f) {
    cmd->add_option("--config", f.config_path, "JSON config file; flags override its values");
    cmd->add_option("--n-pairs", f.n_pairs, "number of gain/loss pairs (N = 2*n_pairs)");
    cmd->add_option("--kappa", f.kappa, "amplification/dissipation rate (default 1)");
    cmd->add_option("--j-over-kappa", f.j_over_kappa, "coupling ratio J/kappa");
    cmd->add_option("--e-over-kappa", f.e_over_kappa, "drive amplitude ratio E/kappa");
    cmd->add_option("--delta-over-kappa", f.delta_over_kappa, "drive detuning ratio Delta/kappa");
    cmd->add_option("--drive-site", f.drive_site, "driven site, label (a1, b3) or index");
    cmd->add_option("--gamma-out", f.gamma_out, "cavity-to-fiber output coupling");
    cmd->add_flag("--noise,!--no-noise", f.noise, "enable amplification/dissipation noise");
    cmd->add_option("--t-final", f.t_final, "evolution horizon (kappa*t)");
    cmd->add_option("--dt-out", f.dt_out, "output grid spacing (default t_final/800)");
    cmd->add_option("--seed", f.seed, "RNG seed (mc scenario)");
    cmd->add_option("--out", f.out, "output file path");
    cmd->add_option("--format", f.format, "output format: csv or json")
        ->check(CLI::IsMember({"csv", "json"}));
    cmd->add_option("--threads", f.threads, "worker threads (0 = hardware)");
}

cpt::ScenarioConfig base_config(const CommonFlags& f, cpt::ScenarioKind kind,
                                const std::string& preset_name) {
    cpt::ScenarioConfig cfg;
    if (f.config_path) {
        std::ifstream in(*f.config_path);
        if (!in) throw std::runtime_error("cannot open config file '" + *f.config_path + "'");
        cpt::Json j;
        try {
            in >> j;
        } catch (const cpt::Json::exception& e) {
            throw std::runtime_error("config file parse error: " + std::string(e.what()));
        }
        cfg = cpt::config_from_json(j);
    } else if (kind == cpt::ScenarioKind::figure_preset) {
        cfg = cpt::preset_config(preset_name);
    }
    cfg.scenario = kind;
    if (kind == cpt::ScenarioKind::figure_preset) cfg.preset = preset_name;

    if (f.n_pairs) cfg.system.n_pairs = *f.n_pairs;
    if (f.kappa) cfg.system.kappa = *f.kappa;
    if (f.j_over_kappa) cfg.system.coupling_j = *f.j_over_kappa * cfg.system.kappa;
    if (f.e_over_kappa) cfg.system.drive.amplitude_e = *f.e_over_kappa * cfg.system.kappa;
    if (f.delta_over_kappa)
        cfg.system.drive.detuning_delta = *f.delta_over_kappa * cfg.system.kappa;
    if (f.drive_site)
        cfg.system.drive.site_index =
            cpt::site_from_label(*f.drive_site, cfg.system.total_sites());
    if (f.gamma_out) cfg.system.gamma_out = *f.gamma_out;
    if (f.noise) cfg.system.noise_enabled = *f.noise;
    if (f.t_final) {
        cfg.time_grid.t_final = *f.t_final;
        if (!f.dt_out) cfg.time_grid.dt_out = *f.t_final / 800.0;
    }
    if (f.dt_out) cfg.time_grid.dt_out = *f.dt_out;
    if (f.seed) cfg.seed = *f.seed;
    if (f.out) cfg.output.path = *f.out;
    if (f.format) cfg.output.format = *f.format == "json" ? cpt::OutputFormat::json
                                                          : cpt::OutputFormat::csv;
    if (f.threads) cfg.threads = *f.threads;
    if (cfg.output.path.empty())
        cfg.output.path = (kind == cpt::ScenarioKind::figure_preset ? preset_name
                                                                    : cpt::to_string(kind)) +
                          (cfg.output.format == cpt::OutputFormat::json ? ".json" : ".csv");
    return cfg;
}

int run_and_emit(const cpt::ScenarioConfig& cfg) {
    const cpt::ScenarioResult result = cpt::run_scenario(cfg);
    cpt::emit(result, cfg.output);
    std::printf("wrote %s (%zu columns, %zu rows, %.3f s)\n", cfg.output.path.c_str(),
                result.column_names.size(),
                result.columns.empty() ? 0 : result.columns[0].size(),
                result.wall_time_seconds);
    if (result.metadata.contains("regime"))
        std::printf("regime: %s\n", result.metadata["regime"].get<std::string>().c_str());
    if (result.metadata.contains("max_abs_z"))
        std::printf("max |z| vs deterministic: %.3f\n",
                    result.metadata["max_abs_z"].get<double>());
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"simulator for rings of coupled gain/loss microcavities"};
    app.set_version_flag("--version", std::string("cpt-sim ") + cpt::kToolVersion);
    app.require_subcommand(1);

    struct Sub {
        CLI::App* cmd = nullptr;
        CommonFlags flags;
        cpt::ScenarioKind kind;
    };
    // deque: CLI11 stores pointers into each Sub's flags, so elements must
    // not move when more subcommands are added
    std::deque<Sub> subs;
    auto add_sub = [&](const char* name, const char* desc, cpt::ScenarioKind kind) -> Sub& {
        subs.push_back(Sub{app.add_subcommand(name, desc), {}, kind});
        add_common_flags(subs.back().cmd, subs.back().flags);
        return subs.back();
    };

    auto& spectrum = add_sub("spectrum", "eigenvalues of -i[M] with degeneracies",
                             cpt::ScenarioKind::spectrum);
    std::optional<double> spectrum_tol;
    spectrum.cmd->add_option("--tol", spectrum_tol, "eigenvalue clustering tolerance");

    add_sub("evolve", "photon-number evolution from vacuum", cpt::ScenarioKind::evolve);

    auto& contrast = add_sub("contrast", "average contrast between two modes",
                             cpt::ScenarioKind::contrast);
    std::string site_i = "a1", site_j = "b1";
    contrast.cmd->add_option("--site-i", site_i, "first mode (label or index)");
    contrast.cmd->add_option("--site-j", site_j, "second mode (label or index)");

    auto& recip = add_sub("reciprocity", "forward/backward transmission comparison",
                          cpt::ScenarioKind::reciprocity);
    std::string site_fwd = "a1", site_bwd;
    recip.cmd->add_option("--site-fwd", site_fwd, "driven gain site (forward run)");
    recip.cmd->add_option("--site-bwd", site_bwd, "driven loss site (backward run)");

    auto& sweep = add_sub("sweep", "parameter sweep of final-state observables",
                          cpt::ScenarioKind::sweep);
    std::string sweep_param = "j_over_kappa";
    std::vector<double> sweep_values;
    sweep.cmd->add_option("--sweep-param", sweep_param,
                          "j_over_kappa | e_over_kappa | delta_over_kappa");
    sweep.cmd->add_option("--sweep-values", sweep_values, "values to sweep over");

    auto& mc = add_sub("mc", "Monte Carlo cross-check against moment propagation",
                       cpt::ScenarioKind::mc);
    std::optional<int> n_traj;
    std::optional<double> mc_dt;
    std::optional<int> record_stride;
    mc.cmd->add_option("--n-traj", n_traj, "number of trajectories");
    mc.cmd->add_option("--dt", mc_dt, "Euler-Maruyama step");
    mc.cmd->add_option("--record-stride", record_stride, "record every k-th step");

    auto& preset = add_sub("preset", "figure-data presets (fig2..fig6)",
                           cpt::ScenarioKind::figure_preset);
    std::string preset_name;
    preset.cmd->add_option("name", preset_name, "fig2 | fig3 | fig4 | fig5a | fig5b | fig6")
        ->required();

    CLI11_PARSE(app, argc, argv);

    try {
        for (Sub& sub : subs) {
            if (!sub.cmd->parsed()) continue;
            cpt::ScenarioConfig cfg = base_config(sub.flags, sub.kind, preset_name);
            const int n = cfg.system.total_sites();
            if (sub.kind == cpt::ScenarioKind::spectrum && spectrum_tol)
                cfg.spectrum_tol = *spectrum_tol;
            if (sub.kind == cpt::ScenarioKind::contrast) {
                cfg.contrast_site_i = cpt::site_from_label(site_i, n);
                cfg.contrast_site_j = cpt::site_from_label(site_j, n);
            }
            if (sub.kind == cpt::ScenarioKind::reciprocity) {
                cfg.recip_site_fwd = cpt::site_from_label(site_fwd, n);
                if (!site_bwd.empty()) cfg.recip_site_bwd = cpt::site_from_label(site_bwd, n);
            }
            if (sub.kind == cpt::ScenarioKind::sweep && sweep.cmd->count("--sweep-param") +
                                                            sweep.cmd->count("--sweep-values")) {
                cpt::SweepSpec spec = cfg.sweep.value_or(cpt::SweepSpec{});
                if (sweep.cmd->count("--sweep-param")) spec.parameter = sweep_param;
                if (sweep.cmd->count("--sweep-values")) spec.values = sweep_values;
                cfg.sweep = std::move(spec);
            } else if (sub.kind == cpt::ScenarioKind::sweep && !cfg.sweep) {
                cfg.sweep = cpt::SweepSpec{sweep_param, sweep_values};
            }
            if (sub.kind == cpt::ScenarioKind::mc) {
                if (n_traj) cfg.mc.n_traj = *n_traj;
                if (mc_dt) cfg.mc.dt = *mc_dt;
                if (record_stride) cfg.mc.record_stride = *record_stride;
            }
            return run_and_emit(cfg);
        }
    } catch (const cpt::ConfigError& e) {
        std::fprintf(stderr, "config error at '%s': %s\n", e.field().c_str(), e.what());
        return 2;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 1;
}
