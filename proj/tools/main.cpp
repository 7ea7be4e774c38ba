#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <fmt/format.h>

#include "presets.hpp"
#include "smartmon/config.hpp"
#include "smartmon/error.hpp"
#include "smartmon/experiment.hpp"
#include "smartmon/planning.hpp"
#include "smartmon/workflow.hpp"

namespace fs = std::filesystem;
using namespace smartmon;

namespace {

struct ConfigArgs {
    std::string bundle, design, model, plan;
    void add(CLI::App* cmd) {
        cmd->add_option("--bundle", bundle, "Directory holding design.json, model.json and plan.json");
        cmd->add_option("--design", design, "Design JSON");
        cmd->add_option("--model", model, "Generative model JSON");
        cmd->add_option("--plan", plan, "Plan JSON");
    }
    ConfigBundle load() const {
        std::string d = design, m = model, p = plan;
        if (!bundle.empty()) {
            // Files named explicitly override the bundle's.
            fs::path base(bundle);
            if (d.empty()) d = (base / "design.json").string();
            if (p.empty()) p = (base / "plan.json").string();
            if (m.empty() && fs::exists(base / "model.json")) m = (base / "model.json").string();
        }
        if (d.empty() || p.empty()) throw ValidationError("need --bundle, or --design and --plan");
        auto dj = read_json_file(d);
        auto pj = read_json_file(p);
        std::optional<nlohmann::json> mj;
        if (!m.empty()) mj = read_json_file(m);
        return validate_config(dj, mj ? &*mj : nullptr, pj, fs::path(p).parent_path().string());
    }
};

struct Run {
    std::string command;
    std::chrono::steady_clock::time_point start = std::chrono::steady_clock::now();
    RunManifest manifest(const nlohmann::json& resolved, std::uint64_t seed) const {
        RunManifest m;
        m.command = command;
        m.digest = config_digest(resolved);
        m.seed = seed;
        m.version = library_version();
        m.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        return m;
    }
};

nlohmann::json resolved(const ConfigBundle& b) {
    return {{"design", b.design_json}, {"model", b.model_json}, {"plan", plan_to_json(b.plan)}};
}

void write_json(const std::string& file, const nlohmann::json& j) {
    if (file.empty() || file == "-") {
        std::cout << j.dump(2) << "\n";
        return;
    }
    std::ofstream out(file);
    if (!out) throw ValidationError("cannot write " + file);
    out << j.dump(2) << "\n";
}

void print_manifest(const RunManifest& m) {
    std::cerr << fmt::format("{} | seed {} | config {} | version {} | {:.1f} s\n", m.command, m.seed, m.digest,
                             m.version, m.wall_seconds);
}

std::vector<EstimatorKind> chosen_estimators(const Plan& plan, const std::vector<std::string>& names) {
    if (names.empty()) return plan.estimators;
    std::vector<EstimatorKind> out;
    for (auto& n : names) out.push_back(estimator_from_string(n));
    return out;
}

std::string estimate_table(const SnapshotAnalysis& a, bool scale) {
    std::string s = fmt::format("{} at day {} (analysis {} of {}), {} enrolled, {} used\n",
                                to_string(a.estimate.kind), a.estimate.day, a.analysis, a.num_analyses,
                                a.estimate.n_t, a.estimate.n_used);
    s += fmt::format("{:<8} {:<16} {:<8}", "Regime", scale ? "Value/10 (SE)" : "Value (SE)", "Z");
    for (auto& b : a.boundaries) s += fmt::format(" {:<8}", to_string(b.family));
    s += "\n";
    for (int l = 0; l < a.estimate.num_regimes(); ++l) {
        const double f = scale ? 10.0 : 1.0;
        s += fmt::format("{:<8} {:<16} {:<8.2f}", a.estimate.labels[l],
                         fmt::format("{:.2f} ({:.2f})", a.estimate.values[l] / f, a.estimate.se(l) / f),
                         a.z[l]);
        for (auto& b : a.boundaries) s += fmt::format(" {:<8.2f}", b.critical[a.analysis - 1]);
        s += "\n";
    }
    for (size_t i = 0; i < a.decisions.size(); ++i) {
        std::string trig;
        for (int l : a.decisions[i].triggered) trig += (trig.empty() ? "" : ", ") + a.estimate.labels[l];
        s += fmt::format("{}: {}{}\n", to_string(a.boundaries[i].family), to_string(a.decisions[i].kind),
                         trig.empty() ? "" : " (regimes " + trig + ")");
    }
    for (auto& w : a.estimate.warnings) s += "warning: " + w + "\n";
    return s;
}

std::string boundary_table(const BoundarySet& set) {
    std::string s = fmt::format("{:<8} {:<7} {:<22} {}\n", "Method", "Family", "Critical values", "Info");
    for (size_t i = 0; i < set.kinds.size(); ++i) {
        std::string crit, info;
        for (double c : set.specs[i].critical) crit += fmt::format("{}{:.2f}", crit.empty() ? "" : ", ", c);
        for (double v : set.specs[i].info) info += fmt::format("{}{:.3f}", info.empty() ? "" : ", ", v);
        s += fmt::format("{:<8} {:<7} {:<22} {}\n", to_string(set.kinds[i]), to_string(set.specs[i].family),
                         "(" + crit + ")", "(" + info + ")");
    }
    return s;
}

// Pilot-based planning inputs, one per estimator.
struct PilotBundle {
    std::vector<EstimatorKind> kinds;
    std::vector<PilotResult> pilots;
    nlohmann::json to_json() const {
        auto arr = nlohmann::json::array();
        for (size_t i = 0; i < kinds.size(); ++i)
            arr.push_back({{"estimator", to_string(kinds[i])},
                           {"alternative", pilots[i].alt.to_json()},
                           {"null", pilots[i].null.to_json()}});
        return {{"schema_version", 1}, {"pilots", arr}};
    }
};

PilotBundle load_or_run_pilot(const ConfigBundle& b, const std::string& file, std::uint64_t seed) {
    PilotBundle pb;
    if (!file.empty() && fs::exists(file)) {
        auto j = read_json_file(file);
        for (auto& p : j.at("pilots")) {
            pb.kinds.push_back(estimator_from_string(p.at("estimator").get<std::string>()));
            PilotResult r;
            r.alt = alternative_from_json(p.at("alternative"));
            r.null = null_from_json(p.at("null"));
            pb.pilots.push_back(std::move(r));
        }
        return pb;
    }
    ExperimentConfig c = experiment_config(b);
    c.reps = b.plan.pilot_reps;
    c.seed = seed;
    const double control = b.plan.control.kind == ControlSpec::Kind::Fixed ? b.plan.control.value : 0.0;
    std::cerr << fmt::format("pilot: {} trials of {} patients\n", c.reps, c.n);
    MonteCarloReport rep = run_experiment(c);
    for (auto k : b.plan.estimators) {
        pb.kinds.push_back(k);
        pb.pilots.push_back(pilot_from_report(rep, to_string(k), control, 0.0));
    }
    if (!file.empty()) write_json(file, pb.to_json());
    return pb;
}

int cmd_validate(const ConfigArgs& args, Run& run) {
    ConfigBundle b = args.load();
    for (auto& w : b.warnings) std::cout << "warning: " << w << "\n";
    std::cout << fmt::format("valid: {} stages, {} regimes, {} analyses, N = {}\n", b.design.num_stages(),
                             select_regimes(b.design, b.plan.regimes).size(), b.plan.analysis_days.size(), b.plan.n);
    int end = trial_end_day(b.design, b.plan.enrollment, b.plan.timing);
    for (size_t s = 0; s < b.plan.analysis_days.size(); ++s) {
        int day = b.plan.analysis_days[s] == kAnalysisEnd ? end : b.plan.analysis_days[s];
        auto [complete, enrolled] = info_bracket(b.design, b.plan.enrollment, day);
        std::cout << fmt::format("analysis {} (day {}): expected completed {:.3f}, enrolled {:.3f}\n", s + 1, day,
                                 complete, enrolled);
    }
    print_manifest(run.manifest(resolved(b), b.plan.seed));
    return 0;
}

struct SimulateArgs {
    int reps = 0, n = 0;
    std::optional<std::uint64_t> seed;
    std::string boundaries, out, csv, trial_day, snapshot_out;
};

int cmd_simulate(const ConfigArgs& args, const SimulateArgs& sa, Run& run) {
    ConfigBundle b = args.load();
    if (sa.seed) b.plan.seed = *sa.seed;
    if (sa.reps > 0) b.plan.reps = sa.reps;
    if (sa.n > 0) b.plan.n = sa.n;
    ExperimentConfig c = experiment_config(b);
    std::cerr << "seed: " << c.seed << "\n";
    if (!sa.trial_day.empty()) {
        // One trial, written as a snapshot CSV plus its sidecar.
        if (sa.snapshot_out.empty()) throw ValidationError("--trial-day needs --snapshot-out");
        std::vector<Trajectory> cohort = simulate_cohort(c, 0);
        int last = 0;
        for (auto& t : cohort) last = std::max(last, t.outcome_day);
        int day = sa.trial_day == "end" ? last : std::stoi(sa.trial_day);
        Snapshot snap = take_snapshot(cohort, day);
        snap.planned_n = c.n;
        std::ofstream csv(sa.snapshot_out + ".csv");
        write_snapshot_csv(csv, c.design, snap);
        write_json(sa.snapshot_out + ".json", {{"schema_version", 1}, {"analysis_day", day}, {"planned_n", c.n}});
        std::cout << fmt::format("day {}: {} enrolled, {} reached stage 2, {} complete\n", day, snap.n_enrolled(),
                                 snap.n_reached(2), snap.n_complete());
        print_manifest(run.manifest(resolved(b), c.seed));
        return 0;
    }
    if (!sa.boundaries.empty()) {
        BoundarySet set = boundary_set_from_json(read_json_file(sa.boundaries));
        for (auto& arm : c.arms)
            if (auto* spec = set.find(arm.estimator.kind)) arm.boundaries = *spec;
    }
    MonteCarloReport rep = run_experiment(c);
    std::cout << fmt::format("{} replicates, N = {}, {} failures\n", rep.reps, rep.n, rep.failures.size());
    std::cout << fmt::format("{:<8} {:<8} {:<8} {:<12} {}\n", "Method", "Early", "Total", "E(SS)", "E(Stop)");
    for (auto& a : rep.arms)
        std::cout << fmt::format("{:<8} {:<8.3f} {:<8.3f} {:<12} {:.0f} ({:.0f})\n", a.name, a.early_reject,
                                 a.total_reject, fmt::format("{:.0f} ({:.0f})", a.ess_mean, a.ess_sd), a.estop_mean,
                                 a.estop_sd);
    auto m = run.manifest(resolved(b), c.seed);
    auto j = rep.to_json();
    j["manifest"] = m.to_json();
    if (!sa.out.empty()) write_json(sa.out, j);
    if (!sa.csv.empty()) {
        std::ofstream out(sa.csv);
        rep.write_csv(out);
    }
    print_manifest(m);
    return 0;
}

struct AnalyzeArgs {
    std::string snapshot, sidecar, out;
    std::vector<std::string> estimators, boundaries;
    int analysis = 0;
    bool scale = false;
};

int cmd_analyze(const ConfigArgs& args, const AnalyzeArgs& aa, Run& run) {
    ConfigBundle b = args.load();
    std::string side_path = aa.sidecar.empty() ? fs::path(aa.snapshot).replace_extension(".json").string() : aa.sidecar;
    auto side = sidecar_from_json(read_json_file(side_path));
    std::ifstream in(aa.snapshot);
    if (!in) throw ValidationError("cannot open " + aa.snapshot);
    Snapshot snap = read_snapshot_csv(in, b.design, side.analysis_day, side.planned_n);
    int s = aa.analysis > 0 ? aa.analysis : analysis_index(b.plan, side.analysis_day);
    std::vector<BoundarySet> sets;
    for (auto& f : aa.boundaries) sets.push_back(boundary_set_from_json(read_json_file(f)));
    auto results = nlohmann::json::array();
    for (auto k : chosen_estimators(b.plan, aa.estimators)) {
        std::vector<BoundarySpec> bs;
        for (auto& set : sets)
            if (auto* spec = set.find(k)) bs.push_back(*spec);
        auto a = analyze_snapshot(snap, b.design, b.plan, k, s, bs);
        std::cout << estimate_table(a, aa.scale) << "\n";
        results.push_back(a.to_json());
    }
    nlohmann::json res = {{"analyses", results}};
    nlohmann::json digest_src = resolved(b);
    digest_src["snapshot_sha"] = config_digest(nlohmann::json(std::string(std::istreambuf_iterator<char>(
                                                   std::ifstream(aa.snapshot).rdbuf()),
                                               {})));
    auto m = run.manifest(digest_src, b.plan.seed);
    res["manifest"] = m.to_json();
    if (!aa.out.empty()) write_json(aa.out, res);
    print_manifest(m);
    return 0;
}

struct BoundaryArgs {
    std::string family, source, out, pilot;
    int reps = 0;
    std::optional<std::uint64_t> seed;
};

int cmd_boundaries(const ConfigArgs& args, const BoundaryArgs& ba, Run& run) {
    ConfigBundle b = args.load();
    const Plan& p = b.plan;
    std::uint64_t seed = ba.seed.value_or(p.seed);
    std::string source = ba.source.empty() ? p.null_source : ba.source;
    std::vector<BoundaryFamily> families;
    if (ba.family.empty() || ba.family == "both")
        families = {BoundaryFamily::Pocock, BoundaryFamily::OBF};
    else
        families = {family_from_string(ba.family)};
    std::cerr << "seed: " << seed << "\n";
    std::vector<NullCovariance> nulls;
    if (source == "simulated") {
        int reps = ba.reps > 0 ? ba.reps : p.null_reps;
        std::cerr << fmt::format("simulating {} trials of {} patients\n", reps, p.null_n > 0 ? p.null_n : p.n);
        nulls = simulate_nulls(b, reps, seed);
    } else if (source == "analytic") {
        for (auto& pr : load_or_run_pilot(b, ba.pilot, seed).pilots) nulls.push_back(pr.null);
    } else {
        throw ValidationError("--source must be simulated or analytic");
    }
    nlohmann::json out = nlohmann::json::object();
    for (auto f : families) {
        BoundarySet set = solve_boundary_set(p.estimators, nulls, p.alpha, f, seed);
        std::cout << boundary_table(set);
        out[to_string(f)] = set.to_json();
    }
    auto nj = nlohmann::json::array();
    for (size_t i = 0; i < nulls.size(); ++i) {
        nj.push_back(nulls[i].to_json());
        nj.back()["estimator"] = to_string(p.estimators[i]);
        for (auto& w : nulls[i].warnings) std::cerr << "warning (" << to_string(p.estimators[i]) << "): " << w << "\n";
    }
    out["null"] = nj;
    auto m = run.manifest(resolved(b), seed);
    out["manifest"] = m.to_json();
    if (!ba.out.empty()) {
        if (families.size() == 1)
            write_json(ba.out, out[to_string(families[0])]);
        else
            write_json(ba.out, out);
    }
    print_manifest(m);
    return 0;
}

struct PowerArgs {
    int n = 0;
    std::string pilot, out, family;
    std::optional<std::uint64_t> seed;
    int draws = 10000;
    int n0 = 50, step = 10;
};

int cmd_power(const ConfigArgs& args, const PowerArgs& pa, bool search, Run& run) {
    ConfigBundle b = args.load();
    std::uint64_t seed = pa.seed.value_or(b.plan.seed);
    std::cerr << "seed: " << seed << "\n";
    BoundaryFamily family = pa.family.empty() ? b.plan.family : family_from_string(pa.family);
    PilotBundle pb = load_or_run_pilot(b, pa.pilot, seed);
    auto arr = nlohmann::json::array();
    std::cout << fmt::format("{:<8} {:<7} {:<16} {:<7} {:<10} {}\n", "Method", "Family", "Critical", "N", "Power",
                             "Power (integral)");
    for (size_t i = 0; i < pb.kinds.size(); ++i) {
        const auto& pr = pb.pilots[i];
        BoundarySpec bs = solve_boundaries(pr.null, b.plan.alpha, family, seed);
        DrawPower dp(pr.alt, bs, pr.null, pa.draws, seed);
        nlohmann::json row{{"estimator", to_string(pb.kinds[i])}, {"boundaries", bs.to_json()}};
        int n = pa.n > 0 ? pa.n : b.plan.n;
        if (search) {
            SearchOptions so;
            so.n0 = pa.n0;
            so.step = pa.step;
            auto sr = sample_size_search(b.plan.power, [&](int m) { return dp(m).power; }, so);
            n = sr.n;
            row["search"] = sr.to_json();
        }
        auto pd = dp(n);
        auto pi = power_integral(n, pr.alt, bs, pr.null, 1e-3, seed);
        row["power_draws"] = pd.to_json();
        row["power_integral"] = pi.to_json();
        std::string crit;
        for (double c : bs.critical) crit += fmt::format("{}{:.2f}", crit.empty() ? "" : ", ", c);
        std::cout << fmt::format("{:<8} {:<7} {:<16} {:<7} {:<10.3f} {:.3f}\n", to_string(pb.kinds[i]),
                                 to_string(family), "(" + crit + ")", n, pd.power, pi.power);
        arr.push_back(row);
    }
    auto m = run.manifest(resolved(b), seed);
    if (!pa.out.empty()) write_json(pa.out, {{"results", arr}, {"manifest", m.to_json()}});
    print_manifest(m);
    return 0;
}

struct ReproduceArgs {
    std::string id, out, family, data_dir;
    std::uint64_t seed = kDefaultSeed;
    int reps = 0, pilot_reps = 0;
    bool quiet = false;
};

int cmd_reproduce(const ReproduceArgs& ra, Run& run) {
    presets::Options o;
    o.data_dir = ra.data_dir;
    o.seed = ra.seed;
    if (ra.reps > 0) o.reps = ra.reps;
    if (ra.pilot_reps > 0) o.pilot_reps = ra.pilot_reps;
    if (!ra.family.empty()) o.family = family_from_string(ra.family);
    if (!ra.quiet) o.progress = &std::cerr;
    std::cerr << "seed: " << o.seed << "\n";
    auto rep = presets::run_preset(ra.id, o);
    std::cout << rep.text;
    nlohmann::json opts{{"preset", ra.id}, {"seed", o.seed},           {"reps", o.reps},
                        {"pilot_reps", o.pilot_reps}, {"family", to_string(o.family)}};
    auto m = run.manifest(opts, o.seed);
    if (!ra.out.empty()) {
        // Wall time stays out of the report so reruns are byte-identical.
        auto j = rep.json;
        auto mj = m.to_json();
        mj.erase("wall_seconds");
        j["manifest"] = mj;
        write_json(ra.out, j);
    }
    print_manifest(m);
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Interim monitoring for sequential multiple assignment randomized trials"};
    app.require_subcommand(1);
    app.set_version_flag("--version", library_version());
    Run run;

    ConfigArgs vargs;
    auto* validate = app.add_subcommand("validate", "Check design, model and plan documents");
    vargs.add(validate);

    ConfigArgs sargs;
    SimulateArgs sa;
    auto* simulate = app.add_subcommand("simulate", "Monte Carlo experiment, or one simulated trial snapshot");
    sargs.add(simulate);
    simulate->add_option("--reps", sa.reps, "Replicates (default: plan)");
    simulate->add_option("--n", sa.n, "Planned sample size (default: plan)");
    simulate->add_option("--seed", sa.seed, "Seed (default: plan)");
    simulate->add_option("--boundaries", sa.boundaries, "Boundary file from `boundaries`");
    simulate->add_option("--out", sa.out, "Report JSON");
    simulate->add_option("--csv", sa.csv, "Plot-ready CSV");
    simulate->add_option("--trial-day", sa.trial_day, "Simulate one trial and snapshot it on this day (or 'end')");
    simulate->add_option("--snapshot-out", sa.snapshot_out, "Path stem for the snapshot CSV and sidecar");

    ConfigArgs aargs;
    AnalyzeArgs aa;
    auto* analyze = app.add_subcommand("analyze", "Estimate regime values from a snapshot and apply boundaries");
    aargs.add(analyze);
    analyze->add_option("--snapshot", aa.snapshot, "Snapshot CSV")->required();
    analyze->add_option("--sidecar", aa.sidecar, "Sidecar JSON (default: snapshot path with .json)");
    analyze->add_option("--estimator", aa.estimators, "IPWE, AIPWE or IAIPWE (repeatable; default: plan)");
    analyze->add_option("--boundaries", aa.boundaries, "Boundary files (repeatable)");
    analyze->add_option("--analysis", aa.analysis, "Analysis index (default: matched by day)");
    analyze->add_flag("--scale", aa.scale, "Print values x10^-1");
    analyze->add_option("--out", aa.out, "Result JSON");

    ConfigArgs bargs;
    BoundaryArgs ba;
    auto* boundaries = app.add_subcommand("boundaries", "Solve stopping boundaries");
    bargs.add(boundaries);
    boundaries->add_option("--family", ba.family, "pocock, obf or both (default both)");
    boundaries->add_option("--source", ba.source, "simulated or analytic (default: plan)");
    boundaries->add_option("--reps", ba.reps, "Simulated trials (default: plan)");
    boundaries->add_option("--pilot", ba.pilot, "Pilot file for the analytic source (read if present, else written)");
    boundaries->add_option("--seed", ba.seed, "Seed (default: plan)");
    boundaries->add_option("--out", ba.out, "Boundary JSON");

    ConfigArgs pargs, zargs;
    PowerArgs pa, za;
    auto* power = app.add_subcommand("power", "Power at a sample size");
    auto* samplesize = app.add_subcommand("samplesize", "Smallest sample size reaching the target power");
    for (auto [cmd, ca, p] : {std::tuple{power, &pargs, &pa}, std::tuple{samplesize, &zargs, &za}}) {
        ca->add(cmd);
        cmd->add_option("--pilot", p->pilot, "Pilot file (read if present, else written)");
        cmd->add_option("--family", p->family, "pocock or obf (default: plan)");
        cmd->add_option("--draws", p->draws, "Normal draws for power");
        cmd->add_option("--seed", p->seed, "Seed (default: plan)");
        cmd->add_option("--out", p->out, "Result JSON");
    }
    power->add_option("--n", pa.n, "Sample size (default: plan)");
    samplesize->add_option("--n0", za.n0, "Starting sample size");
    samplesize->add_option("--step", za.step, "Initial step");

    ReproduceArgs ra;
    auto* reproduce = app.add_subcommand("reproduce", "Run a desk-scale preset");
    std::string ids;
    for (auto& id : presets::preset_ids()) ids += (ids.empty() ? "" : ", ") + id;
    reproduce->add_option("id", ra.id, "Preset: " + ids)->required();
    reproduce->add_option("--seed", ra.seed, "Seed");
    reproduce->add_option("--reps", ra.reps, "Replicates (default 500)");
    reproduce->add_option("--pilot-reps", ra.pilot_reps, "Pilot replicates (default 200)");
    reproduce->add_option("--family", ra.family, "pocock or obf");
    reproduce->add_option("--data-dir", ra.data_dir, "Fixture directory");
    reproduce->add_option("--out", ra.out, "Report JSON");
    reproduce->add_flag("--quiet", ra.quiet, "No progress lines");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForVersion& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    try {
        run.command = app.get_subcommands().front()->get_name();
        if (*validate) return cmd_validate(vargs, run);
        if (*simulate) return cmd_simulate(sargs, sa, run);
        if (*analyze) return cmd_analyze(aargs, aa, run);
        if (*boundaries) return cmd_boundaries(bargs, ba, run);
        if (*power) return cmd_power(pargs, pa, false, run);
        if (*samplesize) return cmd_power(zargs, za, true, run);
        if (*reproduce) {
            run.command = "reproduce " + ra.id;
            return cmd_reproduce(ra, run);
        }
    } catch (const ValidationError& e) {
        std::cerr << "validation error: " << e.what() << "\n";
        return 2;
    } catch (const NumericalError& e) {
        std::cerr << "numerical error: " << e.what() << "\n";
        return 3;
    } catch (const nlohmann::json::exception& e) {
        std::cerr << "validation error: " << e.what() << "\n";
        return 2;
    }
    return 0;
}
