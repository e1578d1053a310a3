#include "actrace/activity.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "json_internal.hpp"

namespace actrace {

using nlohmann::json;

namespace {

struct WindowGraph {
    // adjacency over vertex order indices
    std::vector<std::vector<int>> adj;
    std::vector<char> alive;

    int degree(int v) const {
        int d = 0;
        for (int u : adj[v])
            if (alive[u]) ++d;
        return d;
    }
};

double component_density(const WindowGraph& g, const std::vector<int>& comp) {
    if (comp.size() <= 1) return 1.0;
    std::int64_t edges = 0;
    for (int v : comp)
        for (int u : g.adj[v])
            if (g.alive[u] && u > v) ++edges;
    const double possible =
        static_cast<double>(comp.size()) * (static_cast<double>(comp.size()) - 1) / 2.0;
    return static_cast<double>(edges) / possible;
}

std::vector<std::vector<int>> live_components(const WindowGraph& g,
                                              const std::vector<int>& vertices) {
    std::vector<std::vector<int>> comps;
    std::vector<char> visited(g.adj.size(), 0);
    for (int s : vertices) {
        if (!g.alive[s] || visited[s]) continue;
        std::vector<int> comp;
        std::vector<int> stack{s};
        visited[s] = 1;
        while (!stack.empty()) {
            const int v = stack.back();
            stack.pop_back();
            comp.push_back(v);
            for (int u : g.adj[v]) {
                if (g.alive[u] && !visited[u]) {
                    visited[u] = 1;
                    stack.push_back(u);
                }
            }
        }
        std::sort(comp.begin(), comp.end());
        comps.push_back(std::move(comp));
    }
    return comps;
}

}  // namespace

std::vector<TightCluster> extract_tight_clusters(
    const std::vector<FeatureVector>& window, const SimilarityParams& sp,
    const ClusteringParams& cp) {
    const int n = static_cast<int>(window.size());
    if (n == 0) return {};

    // canonical vertex order: earliest timestamp first, then pid, then input slot
    std::vector<int> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
        if (window[a].ts_us != window[b].ts_us)
            return window[a].ts_us < window[b].ts_us;
        return window[a].pid < window[b].pid;
    });

    WindowGraph g;
    g.adj.assign(n, {});
    g.alive.assign(n, 1);
    for (int i = 0; i < n; ++i) {
        for (int j = i + 1; j < n; ++j) {
            if (sim(window[order[i]], window[order[j]], sp) >= sp.theta_S) {
                g.adj[i].push_back(j);
                g.adj[j].push_back(i);
            }
        }
    }

    std::vector<int> all(n);
    std::iota(all.begin(), all.end(), 0);
    std::vector<std::vector<int>> pending = live_components(g, all);

    std::vector<std::vector<int>> emitted;
    while (!pending.empty()) {
        std::vector<int> comp = std::move(pending.back());
        pending.pop_back();
        if (static_cast<int>(comp.size()) < cp.min_cluster_size) {
            for (int v : comp) g.alive[v] = 0;
            continue;
        }
        if (component_density(g, comp) >= cp.density_min) {
            emitted.push_back(std::move(comp));
            continue;
        }
        // peel the minimum-degree vertex (earliest vertex wins ties) and
        // re-split whatever remains
        int victim = -1, victim_deg = std::numeric_limits<int>::max();
        for (int v : comp) {
            const int d = g.degree(v);
            if (d < victim_deg) {
                victim_deg = d;
                victim = v;
            }
        }
        g.alive[victim] = 0;
        comp.erase(std::find(comp.begin(), comp.end(), victim));
        auto parts = live_components(g, comp);
        for (auto& part : parts) pending.push_back(std::move(part));
    }

    // deterministic output order: by earliest member, i.e. smallest vertex index
    std::sort(emitted.begin(), emitted.end());
    std::vector<TightCluster> clusters;
    clusters.reserve(emitted.size());
    for (const auto& comp : emitted) {
        std::vector<FeatureVector> members;
        members.reserve(comp.size());
        for (int v : comp) members.push_back(window[order[v]]);
        clusters.push_back(make_tight_cluster(std::move(members)));
    }
    return clusters;
}

double cluster_density(const TightCluster& c, const SimilarityParams& sp) {
    const int n = static_cast<int>(c.members.size());
    if (n <= 1) return 1.0;
    int edges = 0;
    for (int i = 0; i < n; ++i)
        for (int j = i + 1; j < n; ++j)
            if (sim(c.members[i], c.members[j], sp) >= sp.theta_S) ++edges;
    return static_cast<double>(edges) / (static_cast<double>(n) * (n - 1) / 2.0);
}

UpsertResult upsert_activity(ActivityDB& db, TightCluster c,
                             const SimilarityParams& sp) {
    double best = -1;
    std::string best_id;
    for (const auto& [id, existing] : db.activities) {
        const double s = sim_tc(c, existing, sp, SimTcMode::Exact);
        if (s > best || (s == best && id < best_id)) {
            best = s;
            best_id = id;
        }
    }
    ++db.total_observations;
    if (best >= sp.theta_S) {
        auto& hit = db.activities.at(best_id);
        ++hit.observation_count;
        for (const auto& ep : c.endpoints)
            if (!std::binary_search(hit.endpoints.begin(), hit.endpoints.end(), ep))
                hit.endpoints.insert(
                    std::lower_bound(hit.endpoints.begin(), hit.endpoints.end(), ep),
                    ep);
        return {false, best_id};
    }
    std::int64_t first_seen = c.first_seen_us;
    for (const auto& m : c.members) first_seen = std::min(first_seen, m.ts_us);
    c.first_seen_us = first_seen;
    c.observation_count = 1;
    const std::string id = c.id;
    db.activities.emplace(id, std::move(c));
    return {true, id};
}

ActivityDB merge_dbs(const ActivityDB& a, const ActivityDB& b,
                     const SimilarityParams& sp) {
    if (a.vocab_version != b.vocab_version)
        throw std::invalid_argument("cannot merge databases across vocabularies: " +
                                    std::to_string(a.vocab_version) + " vs " +
                                    std::to_string(b.vocab_version));

    // canonical processing order makes the merge order-independent
    std::vector<const TightCluster*> all;
    for (const auto& [id, c] : a.activities) all.push_back(&c);
    for (const auto& [id, c] : b.activities) all.push_back(&c);
    std::sort(all.begin(), all.end(), [](const TightCluster* x, const TightCluster* y) {
        if (x->first_seen_us != y->first_seen_us)
            return x->first_seen_us < y->first_seen_us;
        if (x->id != y->id) return x->id < y->id;
        return x->observation_count > y->observation_count;
    });

    ActivityDB out;
    out.vocab_version = a.vocab_version;
    out.total_observations = a.total_observations + b.total_observations;
    std::vector<TightCluster*> kept;
    for (const TightCluster* c : all) {
        TightCluster* coalesce_into = nullptr;
        for (TightCluster* k : kept) {
            if (k->id == c->id ||
                sim_tc(*c, *k, sp, SimTcMode::Exact) >= sp.theta_S) {
                coalesce_into = k;
                break;
            }
        }
        if (coalesce_into) {
            coalesce_into->observation_count += c->observation_count;
            for (const auto& ep : c->endpoints) {
                auto& eps = coalesce_into->endpoints;
                if (!std::binary_search(eps.begin(), eps.end(), ep))
                    eps.insert(std::lower_bound(eps.begin(), eps.end(), ep), ep);
            }
        } else {
            auto [it, ok] = out.activities.emplace(c->id, *c);
            kept.push_back(&it->second);
        }
    }
    return out;
}

HeapsFit fit_heaps(std::span<const std::pair<double, double>> trajectory) {
    if (trajectory.size() < 10)
        throw std::invalid_argument("heaps fit needs at least 10 points, got " +
                                    std::to_string(trajectory.size()));
    double prev_n = 0;
    for (const auto& [N, m] : trajectory) {
        if (m <= 0)
            throw std::invalid_argument("distinct count must be positive");
        if (N <= prev_n)
            throw std::invalid_argument("total observations must be increasing");
        prev_n = N;
    }
    const auto n = static_cast<double>(trajectory.size());
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    for (const auto& [N, m] : trajectory) {
        const double x = std::log(N);
        const double y = std::log(m);
        sx += x;
        sy += y;
        sxx += x * x;
        sxy += x * y;
    }
    const double slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
    const double intercept = (sy - slope * sx) / n;

    HeapsFit fit;
    fit.alpha = slope;
    fit.A = std::exp(intercept);
    for (const auto& [N, m] : trajectory) {
        const double e = std::log(m) - (intercept + slope * std::log(N));
        fit.residual += e * e;
    }
    if (fit.alpha >= 1.0 - 1e-9 || fit.alpha <= 1e-9) fit.boundary = true;
    return fit;
}

namespace {

// For fixed shape parameters the amplitude has a closed form; the
// objective is then the variance of the shifted log-residuals.
double trunc_power_objective(std::span<const double> xs, std::span<const double> ys,
                             double x0, double s, double gamma, double* ln_c) {
    const auto n = static_cast<double>(xs.size());
    double mean = 0;
    for (std::size_t i = 0; i < xs.size(); ++i)
        mean += std::log(ys[i]) + xs[i] / x0 + gamma * std::log(xs[i] + s);
    mean /= n;
    double ssr = 0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        const double t =
            std::log(ys[i]) + xs[i] / x0 + gamma * std::log(xs[i] + s) - mean;
        ssr += t * t;
    }
    if (ln_c) *ln_c = mean;
    return ssr;
}

}  // namespace

TruncPowerFit fit_truncated_power(std::span<const double> xs,
                                  std::span<const double> ys,
                                  TruncPowerVariant variant) {
    if (xs.size() != ys.size() || xs.size() < 8)
        throw std::invalid_argument("truncated power fit needs at least 8 points");
    double x_min = xs[0], x_max = xs[0];
    for (double x : xs) {
        if (x <= 0) throw std::invalid_argument("x values must be positive");
        x_min = std::min(x_min, x);
        x_max = std::max(x_max, x);
    }
    if (x_min == x_max)
        throw std::invalid_argument("degenerate data: single x value");
    for (double y : ys)
        if (y <= 0) throw std::invalid_argument("y values must be positive");

    // coarse log-spaced grid over the cutoff, linear grids over shift/exponent
    std::vector<double> x0_grid;
    for (int i = 0; i <= 40; ++i)
        x0_grid.push_back(x_max / 100.0 *
                          std::pow(2000.0, static_cast<double>(i) / 40.0));
    std::vector<double> s_grid{0};
    if (variant == TruncPowerVariant::Rank)
        for (double s = 0.5; s <= 12.0; s += 0.5) s_grid.push_back(s);
    std::vector<double> gamma_grid;
    for (double gm = 0.0; gm <= 3.0; gm += 0.05) gamma_grid.push_back(gm);

    double best = std::numeric_limits<double>::infinity();
    double bx0 = x0_grid.front(), bs = 0, bgamma = 0;
    for (double x0 : x0_grid)
        for (double s : s_grid)
            for (double gm : gamma_grid) {
                const double obj = trunc_power_objective(xs, ys, x0, s, gm, nullptr);
                if (obj < best) {
                    best = obj;
                    bx0 = x0;
                    bs = s;
                    bgamma = gm;
                }
            }

    // coordinate refinement by golden-section around the grid optimum
    const double phi = 0.6180339887498949;
    auto refine = [&](double lo, double hi, auto eval) {
        double a = lo, b = hi;
        double c1 = b - phi * (b - a), c2 = a + phi * (b - a);
        double f1 = eval(c1), f2 = eval(c2);
        for (int it = 0; it < 60; ++it) {
            if (f1 < f2) {
                b = c2;
                c2 = c1;
                f2 = f1;
                c1 = b - phi * (b - a);
                f1 = eval(c1);
            } else {
                a = c1;
                c1 = c2;
                f1 = f2;
                c2 = a + phi * (b - a);
                f2 = eval(c2);
            }
        }
        return (a + b) / 2;
    };
    for (int round = 0; round < 4; ++round) {
        bx0 = refine(bx0 / 3, bx0 * 3, [&](double v) {
            return trunc_power_objective(xs, ys, v, bs, bgamma, nullptr);
        });
        if (variant == TruncPowerVariant::Rank) {
            bs = refine(std::max(0.0, bs - 3), bs + 3, [&](double v) {
                return trunc_power_objective(xs, ys, bx0, v, bgamma, nullptr);
            });
        }
        bgamma = refine(std::max(0.0, bgamma - 0.5), bgamma + 0.5, [&](double v) {
            return trunc_power_objective(xs, ys, bx0, bs, v, nullptr);
        });
    }

    TruncPowerFit fit;
    fit.variant = variant;
    fit.x0 = bx0;
    fit.s = bs;
    fit.gamma = bgamma;
    double ln_c = 0;
    fit.residual = trunc_power_objective(xs, ys, bx0, bs, bgamma, &ln_c);
    fit.C = std::exp(ln_c);

    // pure power law for the cutoff-necessity comparison: ln y = ln C - g ln x
    {
        const auto n = static_cast<double>(xs.size());
        double sx = 0, sy = 0, sxx = 0, sxy = 0;
        for (std::size_t i = 0; i < xs.size(); ++i) {
            const double x = std::log(xs[i]);
            const double y = std::log(ys[i]);
            sx += x;
            sy += y;
            sxx += x * x;
            sxy += x * y;
        }
        const double slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
        const double intercept = (sy - slope * sx) / n;
        for (std::size_t i = 0; i < xs.size(); ++i) {
            const double e =
                std::log(ys[i]) - (intercept + slope * std::log(xs[i]));
            fit.power_residual += e * e;
        }
    }
    return fit;
}

double trunc_power_eval(const TruncPowerFit& f, double x) {
    return f.C * std::exp(-x / f.x0) * std::pow(x + f.s, -f.gamma);
}

// -- persistence --------------------------------------------------------------

std::string activity_db_to_json(const ActivityDB& db) {
    json clusters = json::array();
    for (const auto& [id, c] : db.activities)
        clusters.push_back(cluster_to_json_obj(c));
    return json{{"version", db.vocab_version},
                {"total_observations", db.total_observations},
                {"clusters", std::move(clusters)}}
        .dump();
}

ActivityDB activity_db_from_json(const std::string& text) {
    json j = json::parse(text);
    ActivityDB db;
    db.vocab_version = j.at("version").get<std::uint32_t>();
    db.total_observations = j.at("total_observations").get<std::int64_t>();
    for (const auto& jc : j.at("clusters")) {
        auto c = cluster_from_json_obj(jc, db.vocab_version);
        db.activities.emplace(c.id, std::move(c));
    }
    return db;
}

void save_activity_db(const std::string& path, const ActivityDB& db) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open for writing: " + path);
    out << activity_db_to_json(db) << '\n';
}

ActivityDB load_activity_db(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open activity db: " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return activity_db_from_json(ss.str());
}

}  // namespace actrace
