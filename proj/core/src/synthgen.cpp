#include "actrace/synthgen.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <stdexcept>

#include <json.hpp>

#include "actrace/rng.hpp"

namespace actrace {

using nlohmann::json;

namespace {

void normalize_row(std::vector<double>& row) {
    double s = 0;
    for (double v : row) s += v;
    if (s <= 0) throw std::logic_error("row with no mass");
    for (double& v : row) v /= s;
}

TransitionMatrix random_stochastic(int n, Rng& rng, int out_degree) {
    TransitionMatrix m(n, std::vector<double>(n, 0.0));
    for (int r = 0; r < n; ++r) {
        double w = 1.0;
        for (int k = 0; k < out_degree; ++k) {
            const auto c = static_cast<std::size_t>(rng.below(n));
            m[r][c] += w * rng.uniform(0.7, 1.3);
            w *= 0.42;  // keep drifted variants as loop-heavy as their bases
        }
        normalize_row(m[r]);
    }
    return m;
}

}  // namespace

SyntheticFamily make_family(int family_id, int alphabet_size, int n_modes,
                            bool malicious, std::uint64_t seed,
                            double low_region_weight, double successor_decay) {
    if (alphabet_size < 8) throw std::invalid_argument("alphabet too small");
    Rng rng(seed);
    SyntheticFamily f;
    f.family_id = family_id;
    f.malicious = malicious;

    // a family lives mostly inside its own "home" subset of the alphabet,
    // which is what makes word bags family specific; the low/high split is
    // exact so the class-level call mix does not wobble between families
    const int home_size = std::max(6, alphabet_size / 4);
    const int half = alphabet_size / 2;
    const int low_count = std::min(
        home_size,
        static_cast<int>(std::lround(low_region_weight * home_size)));
    std::set<int> picked;
    while (static_cast<int>(picked.size()) < low_count)
        picked.insert(static_cast<int>(rng.below(half)));
    while (static_cast<int>(picked.size()) < home_size)
        picked.insert(static_cast<int>(half + rng.below(alphabet_size - half)));
    std::vector<int> home(picked.begin(), picked.end());

    f.trans.assign(alphabet_size, std::vector<double>(alphabet_size, 0.0));
    for (int r = 0; r < alphabet_size; ++r) {
        auto& row = f.trans[r];
        // geometrically decaying successor weights: call streams then repeat
        // a dominant path with exponentially rarer digressions, which is
        // what gives the word-rank distribution its fast decay
        double w = 1.0;
        for (int k = 0; k < 4; ++k) {
            const int c = home[static_cast<std::size_t>(rng.below(home.size()))];
            row[c] += w * rng.uniform(0.7, 1.3);
            w *= successor_decay;
        }
        // small leak into the full alphabet keeps chains irreducible
        row[static_cast<std::size_t>(rng.below(alphabet_size))] += 0.02;
        normalize_row(row);
    }

    for (int m = 0; m < n_modes; ++m) {
        std::vector<double> mode(alphabet_size, 0.0);
        for (int k = 0; k < 3; ++k)
            mode[home[static_cast<std::size_t>(rng.below(home.size()))]] +=
                rng.uniform(0.5, 1.0);
        normalize_row(mode);
        f.modes.push_back(std::move(mode));
    }
    return f;
}

TransitionMatrix blend_matrices(const TransitionMatrix& a,
                                const TransitionMatrix& b, double w) {
    if (a.size() != b.size()) throw std::invalid_argument("matrix size mismatch");
    if (w == 0) return a;  // keep degenerate blends bit-exact
    if (w == 1) return b;
    TransitionMatrix out(a.size());
    for (std::size_t r = 0; r < a.size(); ++r) {
        out[r].resize(a[r].size());
        for (std::size_t c = 0; c < a[r].size(); ++c)
            out[r][c] = (1 - w) * a[r][c] + w * b[r][c];
        normalize_row(out[r]);
    }
    return out;
}

void attach_library(SyntheticFamily& family, const SyntheticFamily& library,
                    double fraction) {
    if (fraction < 0 || fraction > 1)
        throw std::invalid_argument("library fraction must be in [0, 1]");
    family.lib_trans = library.trans;
    family.lib_modes = library.modes;
    family.lib_fraction = fraction;
}

ProgramVariant make_variant(const SyntheticFamily& family, int variant_id,
                            double epsilon, std::uint64_t seed) {
    if (epsilon < 0 || epsilon > 1)
        throw std::invalid_argument("epsilon must be in [0, 1]");
    Rng rng(seed);
    ProgramVariant v;
    v.family_id = family.family_id;
    v.variant_id = variant_id;
    v.epsilon = epsilon;
    if (epsilon == 0) {
        v.trans = family.trans;
    } else {
        const auto noise =
            random_stochastic(static_cast<int>(family.trans.size()), rng, 4);
        v.trans = blend_matrices(family.trans, noise, epsilon);
    }
    return v;
}

std::vector<SyscallEvent> run_sample(const ProgramVariant& variant,
                                     const SyntheticFamily& family,
                                     const WalkParams& wp,
                                     const std::string& endpoint_id,
                                     std::int32_t pid, std::uint64_t seed,
                                     std::int64_t t0_us) {
    if (family.modes.empty()) throw std::invalid_argument("family has no modes");
    Rng rng(seed);
    std::vector<SyscallEvent> events;
    const auto duration_us = static_cast<std::int64_t>(wp.duration_s * 1e6);
    const auto dwell_us = static_cast<std::int64_t>(wp.mode_dwell_s * 1e6);

    std::int64_t t = t0_us;
    std::int64_t next_switch = t0_us;
    int state = 0;
    bool in_library = false;
    std::size_t mode_cursor = 0;  // cycle through every activity mode
    while (t < t0_us + duration_us) {
        if (t >= next_switch) {
            in_library =
                family.has_library() && rng.uniform() < family.lib_fraction;
            if (in_library) {
                const auto& mode =
                    family.lib_modes[static_cast<std::size_t>(
                        rng.below(family.lib_modes.size()))];
                state = static_cast<int>(rng.discrete(mode));
            } else {
                const auto& mode = family.modes[mode_cursor % family.modes.size()];
                ++mode_cursor;
                state = static_cast<int>(rng.discrete(mode));
            }
            next_switch += dwell_us;
        }
        SyscallEvent ev;
        ev.ts_us = t;
        ev.endpoint_id = endpoint_id;
        ev.pid = pid;
        ev.tid = 1;
        ev.syscall_id = state;
        ev.process_name = family.malicious ? "mal" : "prog";
        events.push_back(std::move(ev));
        const auto& matrix = in_library ? family.lib_trans : variant.trans;
        state = static_cast<int>(rng.discrete(matrix[state]));
        t += static_cast<std::int64_t>(rng.exponential(wp.calls_per_s) * 1e6) + 1;
    }
    return events;
}

Fleet gen_fleet(const FleetParams& fp) {
    if (fp.families < 1) throw std::invalid_argument("need at least one family");
    Fleet fleet;
    Rng master(fp.seed);

    const int n_mal = static_cast<int>(
        std::ceil(fp.malicious_family_fraction * fp.families));
    for (int f = 0; f < fp.families; ++f) {
        fleet.families.push_back(make_family(f, fp.alphabet_size,
                                             fp.modes_per_family, f < n_mal,
                                             mix64(fp.seed ^ (0xFA0000 + f))));
    }
    for (int f = 0; f < fp.families; ++f)
        for (int v = 0; v < fp.variants_per_family; ++v)
            fleet.variants.push_back(
                make_variant(fleet.families[f], v, v == 0 ? 0.0 : fp.variant_epsilon,
                             mix64(fp.seed ^ (0x7A0000 + f * 1000 + v))));

    for (int e = 0; e < fp.endpoints; ++e) {
        Rng ep_rng = master.fork(0xE0000 + e);
        const std::string ep_id = "ep" + std::to_string(e);
        std::vector<SyscallEvent> ep_events;
        for (int p = 0; p < fp.procs_per_endpoint; ++p) {
            const auto vi =
                static_cast<std::size_t>(ep_rng.below(fleet.variants.size()));
            const auto& variant = fleet.variants[vi];
            const auto& family = fleet.families[variant.family_id];
            auto proc_events =
                run_sample(variant, family, fp.walk, ep_id, 100 + p,
                           mix64(fp.seed ^ (0xC0000 + e * 131 + p)));
            ep_events.insert(ep_events.end(), proc_events.begin(),
                             proc_events.end());
        }
        std::stable_sort(ep_events.begin(), ep_events.end(),
                         [](const SyscallEvent& a, const SyscallEvent& b) {
                             return a.ts_us < b.ts_us;
                         });
        fleet.events.insert(fleet.events.end(), ep_events.begin(), ep_events.end());
    }
    return fleet;
}

std::string fleet_params_to_json(const FleetParams& fp) {
    return json{{"alphabet_size", fp.alphabet_size},
                {"families", fp.families},
                {"variants_per_family", fp.variants_per_family},
                {"endpoints", fp.endpoints},
                {"procs_per_endpoint", fp.procs_per_endpoint},
                {"malicious_family_fraction", fp.malicious_family_fraction},
                {"variant_epsilon", fp.variant_epsilon},
                {"modes_per_family", fp.modes_per_family},
                {"duration_s", fp.walk.duration_s},
                {"calls_per_s", fp.walk.calls_per_s},
                {"mode_dwell_s", fp.walk.mode_dwell_s},
                {"seed", fp.seed}}
        .dump();
}

FleetParams fleet_params_from_json(const std::string& text) {
    json j = json::parse(text);
    FleetParams fp;
    fp.alphabet_size = j.value("alphabet_size", fp.alphabet_size);
    fp.families = j.value("families", fp.families);
    fp.variants_per_family = j.value("variants_per_family", fp.variants_per_family);
    fp.endpoints = j.value("endpoints", fp.endpoints);
    fp.procs_per_endpoint = j.value("procs_per_endpoint", fp.procs_per_endpoint);
    fp.malicious_family_fraction =
        j.value("malicious_family_fraction", fp.malicious_family_fraction);
    fp.variant_epsilon = j.value("variant_epsilon", fp.variant_epsilon);
    fp.modes_per_family = j.value("modes_per_family", fp.modes_per_family);
    fp.walk.duration_s = j.value("duration_s", fp.walk.duration_s);
    fp.walk.calls_per_s = j.value("calls_per_s", fp.walk.calls_per_s);
    fp.walk.mode_dwell_s = j.value("mode_dwell_s", fp.walk.mode_dwell_s);
    fp.seed = j.value("seed", fp.seed);
    return fp;
}

ScalingProjection project_scaling(const ScalingInputs& in) {
    if (in.endpoints <= 0 || in.clusters_per_endpoint_week <= 0 ||
        in.heaps_A <= 0)
        throw std::invalid_argument("scaling inputs must be positive");
    ScalingProjection out;
    const double total = in.endpoints * in.clusters_per_endpoint_week;
    out.new_activities_week = in.heaps_A * std::pow(total, in.heaps_alpha);
    out.fp_week = in.fpr_per_activity * out.new_activities_week;
    const double working_set = out.new_activities_week;
    out.fn_week = in.endpoints * in.infected_fraction *
                  (1.0 - std::pow(1.0 - in.pair_spurious_rate, working_set));
    return out;
}

double sensor_bandwidth(double payload_bytes_per_batch, double active_s,
                        double idle_s) {
    if (active_s + idle_s <= 0)
        throw std::invalid_argument("durations must be positive");
    return payload_bytes_per_batch / (active_s + idle_s);
}

double contamination_probability(double r, double holdout_fraction) {
    if (r < 0) throw std::invalid_argument("copy count must be non-negative");
    return 1.0 - std::exp(-r * holdout_fraction);
}

std::string scaling_to_json(const ScalingInputs& in, const ScalingProjection& out) {
    return json{{"inputs",
                 {{"endpoints", in.endpoints},
                  {"clusters_per_endpoint_week", in.clusters_per_endpoint_week},
                  {"heaps_A", in.heaps_A},
                  {"heaps_alpha", in.heaps_alpha},
                  {"fpr_per_activity", in.fpr_per_activity},
                  {"infected_fraction", in.infected_fraction},
                  {"pair_spurious_rate", in.pair_spurious_rate}}},
                {"new_activities_week", out.new_activities_week},
                {"fp_week", out.fp_week},
                {"fn_week", out.fn_week}}
        .dump();
}

}  // namespace actrace
