#include "actrace/phylo.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

#include <json.hpp>

#include "actrace/rng.hpp"

namespace actrace {

using nlohmann::json;

BehaviorProfile mask_baseline(BehaviorProfile profile,
                              std::span<const TightCluster> clean_list,
                              const SimilarityParams& sp) {
    if (clean_list.empty()) return profile;
    std::vector<TightCluster> kept;
    kept.reserve(profile.clusters.size());
    for (auto& c : profile.clusters) {
        bool matches_clean = false;
        for (const auto& g : clean_list) {
            if (sim_tc(c, g, sp, SimTcMode::Exact) >= sp.theta_S) {
                matches_clean = true;
                break;
            }
        }
        if (!matches_clean) kept.push_back(std::move(c));
    }
    profile.clusters = std::move(kept);
    return profile;
}

PhyloGraph impute_edges(std::span<const BehaviorProfile> profiles,
                        const SimilarityParams& sp, double threshold) {
    if (profiles.empty()) throw std::invalid_argument("no profiles");
    const int n = static_cast<int>(profiles.size());

    PhyloGraph g;
    g.sample_ids.reserve(n);
    g.vertex_samples.reserve(n);
    for (int i = 0; i < n; ++i) {
        g.sample_ids.push_back(profiles[i].sample_id);
        g.vertex_samples.push_back({i});
    }

    // owner table: one pooled mu bag per cluster across all profiles
    std::vector<MuMap> bags;
    std::vector<int> bag_profile;
    for (int i = 0; i < n; ++i) {
        for (const auto& c : profiles[i].clusters) {
            bags.push_back(pooled_mu(c));
            bag_profile.push_back(i);
        }
    }
    const MuIndex index = MuIndex::build(bags, sp);

    // for each target sample b: a -> b iff every cluster of b has a
    // strictly-above-threshold match among a's clusters
    std::size_t bag_pos = 0;
    for (int b = 0; b < n; ++b) {
        const auto& clusters_b = profiles[b].clusters;
        if (clusters_b.empty()) {
            continue;  // empty profiles acquire no in-edges
        }
        std::vector<int> sources(n, 0);
        bool first = true;
        for (std::size_t k = 0; k < clusters_b.size(); ++k, ++bag_pos) {
            const auto hits = index.query(bags[bag_pos], threshold);
            std::vector<char> matched(n, 0);
            for (const auto& h : hits)
                if (h.score > threshold) matched[bag_profile[h.owner]] = 1;
            if (first) {
                for (int a = 0; a < n; ++a) sources[a] = matched[a];
                first = false;
            } else {
                for (int a = 0; a < n; ++a) sources[a] &= matched[a];
            }
        }
        for (int a = 0; a < n; ++a)
            if (sources[a] && a != b) g.edges.emplace(a, b);
    }
    return g;
}

namespace {

// iterative Tarjan; returns component index per vertex
std::vector<int> tarjan_scc(int n, const std::set<std::pair<int, int>>& edges,
                            int* component_count) {
    std::vector<std::vector<int>> adj(n);
    for (const auto& [u, v] : edges) adj[u].push_back(v);

    std::vector<int> index(n, -1), low(n, 0), comp(n, -1);
    std::vector<char> on_stack(n, 0);
    std::vector<int> stack;
    int next_index = 0, next_comp = 0;

    struct Frame {
        int v;
        std::size_t child;
    };
    for (int root = 0; root < n; ++root) {
        if (index[root] != -1) continue;
        std::vector<Frame> call{{root, 0}};
        index[root] = low[root] = next_index++;
        stack.push_back(root);
        on_stack[root] = 1;
        while (!call.empty()) {
            auto& fr = call.back();
            if (fr.child < adj[fr.v].size()) {
                const int w = adj[fr.v][fr.child++];
                if (index[w] == -1) {
                    index[w] = low[w] = next_index++;
                    stack.push_back(w);
                    on_stack[w] = 1;
                    call.push_back({w, 0});
                } else if (on_stack[w]) {
                    low[fr.v] = std::min(low[fr.v], index[w]);
                }
            } else {
                if (low[fr.v] == index[fr.v]) {
                    while (true) {
                        const int w = stack.back();
                        stack.pop_back();
                        on_stack[w] = 0;
                        comp[w] = next_comp;
                        if (w == fr.v) break;
                    }
                    ++next_comp;
                }
                const int v = fr.v;
                call.pop_back();
                if (!call.empty()) low[call.back().v] = std::min(low[call.back().v], low[v]);
            }
        }
    }
    *component_count = next_comp;
    return comp;
}

}  // namespace

PhyloGraph condense_and_reduce(const PhyloGraph& g) {
    if (g.condensed) throw std::invalid_argument("graph already condensed");
    const int n = static_cast<int>(g.vertex_count());

    int comp_count = 0;
    const std::vector<int> comp = tarjan_scc(n, g.edges, &comp_count);

    // canonical vertex numbering: components ordered by smallest member sample
    std::vector<std::vector<int>> comp_samples(comp_count);
    for (int v = 0; v < n; ++v)
        for (int s : g.vertex_samples[v]) comp_samples[comp[v]].push_back(s);
    for (auto& cs : comp_samples) std::sort(cs.begin(), cs.end());

    std::vector<int> order(comp_count);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](int a, int b) {
        return comp_samples[a].front() < comp_samples[b].front();
    });
    std::vector<int> renum(comp_count);
    for (int i = 0; i < comp_count; ++i) renum[order[i]] = i;

    PhyloGraph out;
    out.sample_ids = g.sample_ids;
    out.vertex_samples.resize(comp_count);
    for (int c = 0; c < comp_count; ++c)
        out.vertex_samples[renum[c]] = std::move(comp_samples[c]);
    std::set<std::pair<int, int>> dag_edges;
    for (const auto& [u, v] : g.edges) {
        const int cu = renum[comp[u]], cv = renum[comp[v]];
        if (cu != cv) dag_edges.emplace(cu, cv);
    }
    out.condensed = true;

    // transitive reduction of the DAG via reachability sets
    const int m = comp_count;
    std::vector<std::vector<int>> succ(m);
    std::vector<int> indeg(m, 0);
    for (const auto& [u, v] : dag_edges) {
        succ[u].push_back(v);
        ++indeg[v];
    }
    std::vector<int> topo;
    {
        std::vector<int> q;
        for (int v = 0; v < m; ++v)
            if (indeg[v] == 0) q.push_back(v);
        std::vector<int> deg = indeg;
        while (!q.empty()) {
            const int v = q.back();
            q.pop_back();
            topo.push_back(v);
            for (int w : succ[v])
                if (--deg[w] == 0) q.push_back(w);
        }
    }
    const std::size_t words = (m + 63) / 64;
    std::vector<std::vector<std::uint64_t>> reach(m,
                                                  std::vector<std::uint64_t>(words, 0));
    auto test_bit = [&](const std::vector<std::uint64_t>& bits, int v) {
        return (bits[v >> 6] >> (v & 63)) & 1;
    };
    for (auto it = topo.rbegin(); it != topo.rend(); ++it) {
        const int u = *it;
        for (int w : succ[u]) {
            reach[u][w >> 6] |= 1ULL << (w & 63);
            for (std::size_t i = 0; i < words; ++i) reach[u][i] |= reach[w][i];
        }
    }
    for (const auto& [u, v] : dag_edges) {
        bool redundant = false;
        for (int w : succ[u]) {
            if (w != v && test_bit(reach[w], v)) {
                redundant = true;
                break;
            }
        }
        if (!redundant) out.edges.emplace(u, v);
    }
    out.reduced = true;
    return out;
}

std::vector<std::vector<char>> reachability(const PhyloGraph& g) {
    const int n = static_cast<int>(g.vertex_count());
    std::vector<std::vector<int>> adj(n);
    for (const auto& [u, v] : g.edges) adj[u].push_back(v);
    std::vector<std::vector<char>> reach(n, std::vector<char>(n, 0));
    for (int s = 0; s < n; ++s) {
        std::vector<int> stack{s};
        std::vector<char> seen(n, 0);
        while (!stack.empty()) {
            const int v = stack.back();
            stack.pop_back();
            for (int w : adj[v]) {
                if (!reach[s][w]) {
                    reach[s][w] = 1;
                    if (!seen[w]) {
                        seen[w] = 1;
                        stack.push_back(w);
                    }
                }
            }
        }
    }
    return reach;
}

namespace {

// Clauset-Newman-Moore style greedy modularity over an undirected edge list.
// Deterministic: merge candidates tie-break on the smallest involved vertex.
std::vector<std::vector<int>> greedy_modularity_communities(
    int n, const std::vector<std::pair<int, int>>& edges) {
    std::vector<int> community(n);
    std::iota(community.begin(), community.end(), 0);
    if (edges.empty()) {
        std::vector<std::vector<int>> out(n);
        for (int v = 0; v < n; ++v) out[v] = {v};
        return out;
    }
    const double m = static_cast<double>(edges.size());

    std::map<int, std::map<int, double>> e;  // community pair -> edge fraction
    std::map<int, double> a;                 // community -> degree fraction
    std::map<int, int> min_vertex;
    for (int v = 0; v < n; ++v) min_vertex[v] = v;
    for (const auto& [u, v] : edges) {
        const int cu = u, cv = v;
        e[std::min(cu, cv)][std::max(cu, cv)] += 1.0 / m;
        a[cu] += 0.5 / m;
        a[cv] += 0.5 / m;
    }

    while (true) {
        double best_gain = 1e-12;
        int bi = -1, bj = -1;
        for (const auto& [i, row] : e) {
            for (const auto& [j, eij] : row) {
                if (i == j) continue;
                const double gain = eij - 2.0 * a[i] * a[j];
                const auto tie = std::pair{std::min(min_vertex[i], min_vertex[j]),
                                           std::max(min_vertex[i], min_vertex[j])};
                if (gain > best_gain ||
                    (bi >= 0 && gain == best_gain &&
                     tie < std::pair{std::min(min_vertex[bi], min_vertex[bj]),
                                     std::max(min_vertex[bi], min_vertex[bj])})) {
                    best_gain = gain;
                    bi = i;
                    bj = j;
                }
            }
        }
        if (bi < 0) break;

        // merge bj into bi
        for (int v = 0; v < n; ++v)
            if (community[v] == bj) community[v] = bi;
        min_vertex[bi] = std::min(min_vertex[bi], min_vertex[bj]);
        a[bi] += a[bj];
        a.erase(bj);
        // rewire the pair-weight table
        std::map<int, double> merged_row;
        auto absorb = [&](int c) {
            if (auto it = e.find(c); it != e.end()) {
                for (const auto& [k, w] : it->second) {
                    if (k == bi || k == bj) continue;
                    merged_row[k] += w;
                }
                e.erase(it);
            }
            for (auto& [i2, row] : e) {
                if (auto jt = row.find(c); jt != row.end()) {
                    if (i2 != bi && i2 != bj) merged_row[i2] += jt->second;
                    row.erase(jt);
                }
            }
        };
        absorb(bi);
        absorb(bj);
        for (const auto& [k, w] : merged_row)
            e[std::min(bi, k)][std::max(bi, k)] += w;
        min_vertex.erase(bj);
    }

    std::map<int, std::vector<int>> grouped;
    for (int v = 0; v < n; ++v) grouped[community[v]].push_back(v);
    std::vector<std::vector<int>> out;
    out.reserve(grouped.size());
    for (auto& [c, members] : grouped) out.push_back(std::move(members));
    std::sort(out.begin(), out.end());
    return out;
}

}  // namespace

std::vector<Family> extract_families(const PhyloGraph& g) {
    if (g.vertex_count() == 0) return {};
    if (!g.condensed || !g.reduced)
        throw std::invalid_argument("family extraction expects a condensed, reduced graph");
    const int n = static_cast<int>(g.vertex_count());

    // undirected components
    std::vector<std::vector<int>> undirected(n);
    for (const auto& [u, v] : g.edges) {
        undirected[u].push_back(v);
        undirected[v].push_back(u);
    }
    std::vector<int> comp(n, -1);
    int comp_count = 0;
    for (int s = 0; s < n; ++s) {
        if (comp[s] != -1) continue;
        std::vector<int> stack{s};
        comp[s] = comp_count;
        while (!stack.empty()) {
            const int v = stack.back();
            stack.pop_back();
            for (int w : undirected[v]) {
                if (comp[w] == -1) {
                    comp[w] = comp_count;
                    stack.push_back(w);
                }
            }
        }
        ++comp_count;
    }
    std::vector<std::vector<int>> comp_vertices(comp_count);
    std::vector<std::int64_t> comp_weight(comp_count, 0);
    for (int v = 0; v < n; ++v) {
        comp_vertices[comp[v]].push_back(v);
        comp_weight[comp[v]] += static_cast<std::int64_t>(g.vertex_samples[v].size());
    }
    int largest = 0;
    for (int c = 1; c < comp_count; ++c) {
        if (comp_weight[c] > comp_weight[largest] ||
            (comp_weight[c] == comp_weight[largest] &&
             comp_vertices[c].front() < comp_vertices[largest].front()))
            largest = c;
    }

    auto collect_samples = [&](const std::vector<int>& vertices) {
        std::vector<std::string> ids;
        for (int v : vertices)
            for (int s : g.vertex_samples[v]) ids.push_back(g.sample_ids[s]);
        std::sort(ids.begin(), ids.end());
        return ids;
    };

    std::vector<std::vector<std::string>> family_members;
    for (int c = 0; c < comp_count; ++c) {
        if (c == largest) continue;
        if (comp_weight[c] >= 2) family_members.push_back(collect_samples(comp_vertices[c]));
    }

    // the largest component: peel dominating vertices (no in-edges but some
    // out-edges) until invariant, then split the rest by communities
    {
        std::vector<char> in_comp(n, 0), alive(n, 0);
        for (int v : comp_vertices[largest]) in_comp[v] = alive[v] = 1;
        bool changed = true;
        while (changed) {
            changed = false;
            std::vector<int> indeg(n, 0), outdeg(n, 0);
            for (const auto& [u, v] : g.edges) {
                if (in_comp[u] && in_comp[v] && alive[u] && alive[v]) {
                    ++outdeg[u];
                    ++indeg[v];
                }
            }
            for (int v : comp_vertices[largest]) {
                if (alive[v] && indeg[v] == 0 && outdeg[v] > 0) {
                    alive[v] = 0;
                    changed = true;
                }
            }
        }
        std::vector<int> survivors;
        for (int v : comp_vertices[largest])
            if (alive[v]) survivors.push_back(v);
        if (!survivors.empty()) {
            std::map<int, int> local;
            for (std::size_t i = 0; i < survivors.size(); ++i)
                local[survivors[i]] = static_cast<int>(i);
            std::vector<std::pair<int, int>> local_edges;
            for (const auto& [u, v] : g.edges)
                if (alive[u] && alive[v] && in_comp[u] && in_comp[v])
                    local_edges.emplace_back(local[u], local[v]);
            const auto communities = greedy_modularity_communities(
                static_cast<int>(survivors.size()), local_edges);
            for (const auto& cm : communities) {
                std::vector<int> vertices;
                for (int lv : cm) vertices.push_back(survivors[lv]);
                std::int64_t weight = 0;
                for (int v : vertices)
                    weight += static_cast<std::int64_t>(g.vertex_samples[v].size());
                if (weight >= 2) family_members.push_back(collect_samples(vertices));
            }
        }
    }

    std::sort(family_members.begin(), family_members.end());
    std::vector<Family> families;
    families.reserve(family_members.size());
    for (std::size_t i = 0; i < family_members.size(); ++i) {
        Family f;
        f.family_id = "F" + std::to_string(i + 1);
        f.members = std::move(family_members[i]);
        families.push_back(std::move(f));
    }
    return families;
}

std::vector<Family> build_families(std::span<const BehaviorProfile> profiles,
                                   const SimilarityParams& sp) {
    auto strong = extract_families(
        condense_and_reduce(impute_edges(profiles, sp, sp.theta_edge)));

    std::set<std::string> assigned;
    for (const auto& f : strong)
        assigned.insert(f.members.begin(), f.members.end());

    std::vector<BehaviorProfile> residual;
    for (const auto& p : profiles)
        if (!assigned.count(p.sample_id)) residual.push_back(p);

    std::vector<Family> weak;
    if (residual.size() >= 2) {
        weak = extract_families(
            condense_and_reduce(impute_edges(residual, sp, sp.theta_weak)));
        for (std::size_t i = 0; i < weak.size(); ++i) {
            weak[i].weak = true;
            weak[i].family_id = "W" + std::to_string(i + 1);
        }
    }
    strong.insert(strong.end(), weak.begin(), weak.end());
    return strong;
}

std::int64_t AbundanceHistogram::s_obs() const {
    std::int64_t s = 0;
    for (const auto& [k, fk] : f) s += fk;
    return s;
}

std::int64_t AbundanceHistogram::total_observations() const {
    std::int64_t n = 0;
    for (const auto& [k, fk] : f) n += static_cast<std::int64_t>(k) * fk;
    return n;
}

std::int64_t AbundanceHistogram::fk(int k) const {
    auto it = f.find(k);
    return it == f.end() ? 0 : it->second;
}

AbundanceHistogram abundance_from_counts(std::span<const std::int64_t> counts) {
    AbundanceHistogram h;
    for (std::int64_t c : counts) {
        if (c <= 0) throw std::invalid_argument("observation counts must be positive");
        ++h.f[static_cast<int>(c)];
    }
    return h;
}

PopulationEstimate estimate_population(const AbundanceHistogram& hist,
                                       std::uint64_t seed) {
    const auto s_obs = static_cast<double>(hist.s_obs());
    if (s_obs < 1) throw std::invalid_argument("empty abundance histogram");
    const auto n = static_cast<double>(hist.total_observations());
    const auto f1 = static_cast<double>(hist.fk(1));
    const auto f2 = static_cast<double>(hist.fk(2));

    PopulationEstimate est;
    est.chao1 = f2 > 0 ? s_obs + f1 * f1 / (2 * f2)
                       : s_obs + f1 * (f1 - 1) / (2 * (f2 + 1));
    est.jackknife1 = s_obs + f1 * (n - 1) / n;

    // truncated alternating series over the low-abundance counts
    if (f1 > 0) {
        double series = 0;
        for (int k = 1; k <= 6; ++k)
            series += (k % 2 == 1 ? 1.0 : -1.0) * static_cast<double>(hist.fk(k));
        est.extrapolation = s_obs + std::max(0.0, series);
    } else {
        est.extrapolation = s_obs;
    }

    // Monte Carlo: resample the observations, average the coverage-adjusted
    // richness of each replicate
    if (f1 > 0) {
        std::vector<std::int64_t> counts;
        for (const auto& [k, fk] : hist.f)
            for (std::int64_t i = 0; i < fk; ++i) counts.push_back(k);
        std::vector<double> cdf(counts.size());
        double acc = 0;
        for (std::size_t i = 0; i < counts.size(); ++i) {
            acc += static_cast<double>(counts[i]);
            cdf[i] = acc;
        }
        Rng rng(seed);
        const int replicates = 200;
        const auto draws = static_cast<std::int64_t>(n);
        double total = 0;
        std::vector<std::int64_t> sampled(counts.size());
        for (int r = 0; r < replicates; ++r) {
            std::fill(sampled.begin(), sampled.end(), 0);
            for (std::int64_t d = 0; d < draws; ++d) {
                const double u = rng.uniform() * acc;
                const auto it = std::upper_bound(cdf.begin(), cdf.end(), u);
                const auto idx = static_cast<std::size_t>(
                    std::min<std::ptrdiff_t>(it - cdf.begin(),
                                             static_cast<std::ptrdiff_t>(cdf.size()) - 1));
                ++sampled[idx];
            }
            double sb = 0, f1b = 0;
            for (std::int64_t c : sampled) {
                if (c > 0) ++sb;
                if (c == 1) ++f1b;
            }
            double coverage = 1.0 - f1b / n;
            coverage = std::max(coverage, 1.0 / n);
            total += sb / coverage;
        }
        est.bootstrap_mc = std::max(total / replicates, s_obs);
    } else {
        est.bootstrap_mc = s_obs;
    }

    std::vector<double> values{est.chao1, est.jackknife1, est.extrapolation,
                               est.bootstrap_mc};
    std::sort(values.begin(), values.end());
    est.median = (values[1] + values[2]) / 2;
    est.min = values.front();
    est.max = values.back();
    return est;
}

std::string families_to_csv(std::span<const Family> families) {
    std::string out = "family_id,size,weak,member_ids\n";
    for (const auto& f : families) {
        out += f.family_id + ',' + std::to_string(f.members.size()) + ',' +
               (f.weak ? "1" : "0") + ',';
        for (std::size_t i = 0; i < f.members.size(); ++i) {
            if (i) out += ';';
            out += f.members[i];
        }
        out += '\n';
    }
    return out;
}

std::string estimate_to_json(const PopulationEstimate& e) {
    return json{{"chao1", e.chao1},
                {"jackknife1", e.jackknife1},
                {"extrapolation", e.extrapolation},
                {"bootstrap_mc", e.bootstrap_mc},
                {"median", e.median},
                {"range", json::array({e.min, e.max})}}
        .dump();
}

std::string phylo_graph_to_json(const PhyloGraph& g) {
    json edges = json::array();
    for (const auto& [u, v] : g.edges) edges.push_back(json::array({u, v}));
    return json{{"sample_ids", g.sample_ids},
                {"vertex_samples", g.vertex_samples},
                {"edges", std::move(edges)},
                {"condensed", g.condensed},
                {"reduced", g.reduced}}
        .dump();
}

PhyloGraph phylo_graph_from_json(const std::string& text) {
    json j = json::parse(text);
    PhyloGraph g;
    g.sample_ids = j.at("sample_ids").get<std::vector<std::string>>();
    g.vertex_samples = j.at("vertex_samples").get<std::vector<std::vector<int>>>();
    for (const auto& je : j.at("edges"))
        g.edges.emplace(je.at(0).get<int>(), je.at(1).get<int>());
    g.condensed = j.value("condensed", false);
    g.reduced = j.value("reduced", false);
    return g;
}

}  // namespace actrace
