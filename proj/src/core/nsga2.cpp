#include "nsga2.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <future>
#include <limits>
#include <map>
#include <set>
#include <sstream>

#include <json.hpp>

#include "enumeration.hpp"
#include "trainer.hpp"

namespace tnconv {

namespace fs = std::filesystem;
using ordered_json = nlohmann::ordered_json;

std::string genome_to_json(const Genome& g) {
    ordered_json j;
    j["graph"] = ordered_json::parse(graph_to_json(g.graph));
    j["order_hint"] = g.order_hint;
    return j.dump();
}

Genome genome_from_json(const std::string& text) {
    Genome g;
    try {
        auto j = ordered_json::parse(text);
        g.graph = graph_from_json(j.at("graph").dump());
        g.order_hint = j.at("order_hint").get<std::uint64_t>();
    } catch (const std::exception& e) {
        throw SearchError(std::string("bad genome JSON: ") + e.what());
    }
    return g;
}

bool dominates(const Objectives& a, const Objectives& b) {
    if (!a.evaluated || !b.evaluated) throw SearchError("unevaluated individual");
    const bool no_worse = a.accuracy >= b.accuracy && a.params <= b.params;
    const bool better = a.accuracy > b.accuracy || a.params < b.params;
    return no_worse && better;
}

std::vector<std::vector<int>> fast_nondominated_sort(std::vector<Individual>& pop) {
    const int n = static_cast<int>(pop.size());
    std::vector<std::vector<int>> dominated(n);
    std::vector<int> count(n, 0);
    for (int a = 0; a < n; ++a)
        for (int b = 0; b < n; ++b) {
            if (a == b) continue;
            if (dominates(pop[a].obj, pop[b].obj)) dominated[a].push_back(b);
            else if (dominates(pop[b].obj, pop[a].obj)) ++count[a];
        }
    std::vector<std::vector<int>> fronts;
    std::vector<int> current;
    for (int a = 0; a < n; ++a)
        if (count[a] == 0) current.push_back(a);
    while (!current.empty()) {
        for (int a : current) pop[a].rank = static_cast<int>(fronts.size());
        fronts.push_back(current);
        std::vector<int> next;
        for (int a : current)
            for (int b : dominated[a])
                if (--count[b] == 0) next.push_back(b);
        std::sort(next.begin(), next.end());
        current = std::move(next);
    }
    return fronts;
}

std::vector<double> crowding_distance(const std::vector<Individual>& pop,
                                      const std::vector<int>& front) {
    const std::size_t n = front.size();
    std::vector<double> dist(n, 0.0);
    if (n <= 2) {
        for (auto& d : dist) d = std::numeric_limits<double>::infinity();
        return dist;
    }
    auto run_objective = [&](auto key) {
        std::vector<std::size_t> order(n);
        for (std::size_t q = 0; q < n; ++q) order[q] = q;
        std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
            return key(pop[front[a]].obj) < key(pop[front[b]].obj);
        });
        const double lo = key(pop[front[order.front()]].obj);
        const double hi = key(pop[front[order.back()]].obj);
        dist[order.front()] = std::numeric_limits<double>::infinity();
        dist[order.back()] = std::numeric_limits<double>::infinity();
        if (hi <= lo) return;  // degenerate objective: interiors add nothing
        for (std::size_t q = 1; q + 1 < n; ++q)
            dist[order[q]] += (key(pop[front[order[q + 1]]].obj) -
                               key(pop[front[order[q - 1]]].obj)) /
                              (hi - lo);
    };
    run_objective([](const Objectives& o) { return o.accuracy; });
    run_objective([](const Objectives& o) { return o.params; });
    return dist;
}

namespace {

std::vector<int> parameter_vertices(const EinconvGraph& g) {
    std::vector<int> out;
    for (std::size_t v = 0; v < g.vertices.size(); ++v)
        if (g.vertices[v].kind == VertexKind::Parameter) out.push_back(static_cast<int>(v));
    return out;
}

// candidate labels a new vertex or edge may draw on
std::vector<std::string> channel_pool(const EinconvGraph& g) {
    std::vector<std::string> pool = {"c", "c'"};
    for (const auto& r : g.rank_labels()) pool.push_back(r);
    return pool;
}

std::string fresh_rank_name(const EinconvGraph& g) {
    int next = 1;
    for (const auto& r : g.rank_labels())
        next = std::max(next, std::stoi(r.substr(1)) + 1);
    return "r" + std::to_string(next);
}

void renumber_stage_after_add(EinconvGraph& g, int new_vertex, Rng& rng) {
    if (g.stages.empty()) {
        std::vector<int> all;
        for (std::size_t v = 0; v < g.vertices.size(); ++v)
            if (g.vertices[v].kind != VertexKind::Input) all.push_back(static_cast<int>(v));
        g.stages = {all};
        return;
    }
    g.stages[rng.below(g.stages.size())].push_back(new_vertex);
}

// the seven operators; each returns true when it changed the graph
bool op_add_vertex(Genome& g, Rng& rng) {
    const auto pool = channel_pool(g.graph);
    std::vector<std::string> labels;
    for (const auto& l : pool)
        if (rng.uniform() < 0.5) labels.push_back(l);
    if (labels.empty()) labels.push_back(pool[rng.below(pool.size())]);
    GraphVertex v;
    v.labels = make_label_set(labels);
    v.kind = VertexKind::Parameter;
    g.graph.vertices.push_back(v);
    renumber_stage_after_add(g.graph, static_cast<int>(g.graph.vertices.size()) - 1, rng);
    return true;
}

bool op_remove_vertex(Genome& g, Rng& rng) {
    const auto params = parameter_vertices(g.graph);
    if (params.size() <= 1) return false;
    const int victim = params[rng.below(params.size())];
    EinconvGraph next = g.graph;
    next.vertices.erase(next.vertices.begin() + victim);
    std::vector<std::vector<int>> stages;
    std::vector<bool> flags;
    bool carry = false;
    for (std::size_t s = 0; s < next.stages.size(); ++s) {
        if (s > 0)
            carry = carry || (s - 1 < g.graph.activations.size() && g.graph.activations[s - 1]);
        std::vector<int> stage;
        for (int v : g.graph.stages[s]) {
            if (v == victim) continue;
            stage.push_back(v > victim ? v - 1 : v);
        }
        if (stage.empty()) continue;
        if (!stages.empty()) flags.push_back(carry);
        stages.push_back(stage);
        carry = false;
    }
    next.stages = std::move(stages);
    next.activations = std::move(flags);
    g.graph = std::move(next);
    return true;
}

bool op_add_rank(Genome& g, Rng& rng) {
    const auto params = parameter_vertices(g.graph);
    if (params.size() < 2) return false;
    const std::string name = fresh_rank_name(g.graph);
    // attach to a random subset of size >= 2
    std::vector<int> chosen;
    while (chosen.size() < 2) {
        chosen.clear();
        for (int v : params)
            if (rng.uniform() < 0.5) chosen.push_back(v);
    }
    g.graph.inner.push_back({name, 2});
    for (int v : chosen)
        g.graph.vertices[v].labels = make_label_set([&] {
            auto ls = g.graph.vertices[v].labels;
            ls.push_back(name);
            return ls;
        }());
    return true;
}

bool op_remove_rank(Genome& g, Rng& rng) {
    const auto ranks = g.graph.rank_labels();
    if (ranks.empty()) return false;
    const std::string victim = ranks[rng.below(ranks.size())];
    for (auto& v : g.graph.vertices) {
        auto it = std::find(v.labels.begin(), v.labels.end(), victim);
        if (it != v.labels.end()) v.labels.erase(it);
    }
    g.graph.inner.erase(
        std::remove_if(g.graph.inner.begin(), g.graph.inner.end(),
                       [&](const IndexLabel& l) { return l.name == victim; }),
        g.graph.inner.end());
    return true;
}

bool op_resize_rank(Genome& g, Rng& rng) {
    const auto ranks = g.graph.rank_labels();
    if (ranks.empty()) return false;
    const std::string victim = ranks[rng.below(ranks.size())];
    const bool grow = rng.below(2) == 0;
    for (auto& l : g.graph.inner)
        if (l.name == victim) l.dim = grow ? l.dim * 2 : std::max<std::int64_t>(2, l.dim / 2);
    return true;
}

bool op_toggle_activation(Genome& g, Rng& rng) {
    if (g.graph.stages.size() < 2) return false;
    const std::size_t b = rng.below(g.graph.activations.size());
    g.graph.activations[b] = !g.graph.activations[b];
    return true;
}

bool op_reshuffle_order(Genome& g, Rng& rng) {
    g.order_hint = rng.next();
    // re-draw the stage partition: a random ordered split of the non-input
    // vertices, so activation toggles have boundaries to act on
    std::vector<int> verts;
    for (std::size_t v = 0; v < g.graph.vertices.size(); ++v)
        if (g.graph.vertices[v].kind != VertexKind::Input) verts.push_back(static_cast<int>(v));
    for (std::size_t v = verts.size() - 1; v > 0; --v)
        std::swap(verts[v], verts[rng.below(v + 1)]);
    const std::size_t max_stages = std::min<std::size_t>(verts.size(), 4);
    const std::size_t n_stages = 1 + rng.below(max_stages);
    std::vector<std::vector<int>> stages(n_stages);
    for (std::size_t q = 0; q < verts.size(); ++q)
        stages[q % n_stages].push_back(verts[q]);
    for (auto& s : stages) std::sort(s.begin(), s.end());
    std::vector<bool> flags;
    for (std::size_t b = 0; b + 1 < n_stages; ++b) flags.push_back(rng.below(2) == 0);
    g.graph.stages = std::move(stages);
    g.graph.activations = std::move(flags);
    return true;
}

}  // namespace

std::optional<Genome> try_mutation_op(const Genome& genome, int op_index, Rng& rng,
                                      const RuleConfig& rules) {
    using Op = bool (*)(Genome&, Rng&);
    static const Op ops[] = {op_add_vertex,  op_remove_vertex, op_add_rank,
                             op_remove_rank, op_resize_rank,   op_toggle_activation,
                             op_reshuffle_order};
    if (op_index < 0 || op_index >= 7) throw SearchError("mutation operator out of range");
    Genome next = genome;
    if (!ops[op_index](next, rng)) return std::nullopt;
    // reduce to nonredundant form, keep stages consistent, revalidate
    auto trace = reduce_to_fixpoint(next.graph);
    next.graph = trace.result;
    if (!validate(next.graph).empty()) return std::nullopt;
    if (!is_nonredundant(next.graph, rules)) return std::nullopt;
    return next;
}

Genome mutate(const Genome& genome, Rng& rng, const RuleConfig& rules) {
    for (int attempt = 0; attempt < 20; ++attempt) {
        auto next = try_mutation_op(genome, static_cast<int>(rng.below(7)), rng, rules);
        if (next.has_value()) return *next;
    }
    return genome;
}

namespace {

void environmental_selection(std::vector<Individual>& pool, int target) {
    auto fronts = fast_nondominated_sort(pool);
    std::vector<Individual> keep;
    for (const auto& front : fronts) {
        auto dist = crowding_distance(pool, front);
        for (std::size_t q = 0; q < front.size(); ++q) pool[front[q]].crowding = dist[q];
        if (static_cast<int>(keep.size() + front.size()) <= target) {
            for (int a : front) keep.push_back(pool[a]);
        } else {
            std::vector<std::size_t> order(front.size());
            for (std::size_t q = 0; q < front.size(); ++q) order[q] = q;
            std::stable_sort(order.begin(), order.end(),
                             [&](std::size_t a, std::size_t b) { return dist[a] > dist[b]; });
            for (std::size_t q = 0; q < order.size() && static_cast<int>(keep.size()) < target;
                 ++q)
                keep.push_back(pool[front[order[q]]]);
        }
        if (static_cast<int>(keep.size()) >= target) break;
    }
    pool = std::move(keep);
}

std::string csv_row(const Individual& ind) {
    std::ostringstream out;
    out << canonical_hash_hex(ind.genome.graph) << "," << std::llround(ind.obj.params) << ","
        << std::llround(ind.obj.flops) << "," << ind.obj.accuracy << "," << ind.generation
        << "," << ind.rank;
    return out.str();
}

}  // namespace

std::string archive_csv(const std::vector<Individual>& rows, const std::string& header) {
    std::ostringstream out;
    if (!header.empty()) out << "# " << header << "\n";
    out << "canonical_hash,params,flops,accuracy,generation,front_rank\n";
    for (const auto& ind : rows) out << csv_row(ind) << "\n";
    return out.str();
}

SearchResult search(const std::vector<Genome>& initial, const Evaluator& evaluate,
                    const SearchOptions& options) {
    if (options.population < 2) throw SearchError("population must be at least 2");
    if (options.generations < 0) throw SearchError("generations must be nonnegative");
    if (initial.empty()) throw SearchError("empty initial population");

    SearchResult result;
    Rng rng(options.seed);
    std::map<std::string, Objectives> cache;
    std::vector<Individual> population;
    int start_gen = 0;

    const bool io = !options.out_dir.empty();
    if (io) fs::create_directories(options.out_dir);

    if (options.resume && io) {
        // restore the newest population snapshot and the archive
        int last = -1;
        for (const auto& entry : fs::directory_iterator(options.out_dir)) {
            const std::string name = entry.path().filename().string();
            if (name.rfind("population_", 0) == 0 && name.find(".jsonl") != std::string::npos)
                last = std::max(last, std::stoi(name.substr(11)));
        }
        if (last >= 0) {
            std::ifstream pf(options.out_dir + "/population_" + std::to_string(last) +
                             ".jsonl");
            std::string line;
            while (std::getline(pf, line)) {
                if (line.empty() || line[0] == '#') continue;
                auto j = ordered_json::parse(line);
                Individual ind;
                ind.genome = genome_from_json(j.at("genome").dump());
                ind.obj.accuracy = j.at("accuracy").get<double>();
                ind.obj.params = j.at("params").get<double>();
                ind.obj.flops = j.at("flops").get<double>();
                ind.obj.evaluated = true;
                ind.generation = last;
                population.push_back(std::move(ind));
            }
            std::ifstream af(options.out_dir + "/archive_graphs.jsonl");
            while (std::getline(af, line)) {
                if (line.empty() || line[0] == '#') continue;
                auto j = ordered_json::parse(line);
                Individual ind;
                ind.genome = genome_from_json(j.at("genome").dump());
                ind.obj.accuracy = j.at("accuracy").get<double>();
                ind.obj.params = j.at("params").get<double>();
                ind.obj.flops = j.at("flops").get<double>();
                ind.obj.evaluated = true;
                ind.generation = j.at("generation").get<int>();
                result.archive.push_back(ind);
                cache[canonical_form(ind.genome.graph)] = ind.obj;
            }
            start_gen = last + 1;
        }
    }

    auto evaluate_cached = [&](std::vector<Individual>& batch, int generation) {
        // unique uncached genomes first, evaluated in parallel
        std::vector<std::string> keys(batch.size());
        std::map<std::string, const Genome*> pending;
        for (std::size_t q = 0; q < batch.size(); ++q) {
            keys[q] = canonical_form(batch[q].genome.graph);
            if (!cache.count(keys[q])) pending.emplace(keys[q], &batch[q].genome);
            else ++result.cache_hits;
        }
        auto run_one = [&evaluate](const Genome* g) {
            Objectives obj;
            try {
                obj = evaluate(*g);
            } catch (const std::exception&) {
                obj.accuracy = 0.0;  // untrainable structures score zero
                obj.params = static_cast<double>(g->graph.parameter_count());
            }
            obj.evaluated = true;
            return obj;
        };
        if (options.jobs > 1 && pending.size() > 1) {
            std::vector<std::pair<std::string, std::future<Objectives>>> futs;
            for (const auto& [key, g] : pending)
                futs.emplace_back(key, std::async(std::launch::async, run_one, g));
            for (auto& [key, fut] : futs) cache[key] = fut.get();
        } else {
            for (const auto& [key, g] : pending) cache[key] = run_one(g);
        }
        for (std::size_t q = 0; q < batch.size(); ++q) {
            batch[q].obj = cache[keys[q]];
            batch[q].generation = generation;
        }
    };

    std::ofstream archive_graphs;
    if (io)
        archive_graphs.open(options.out_dir + "/archive_graphs.jsonl", std::ios::app);
    auto append_archive = [&](const std::vector<Individual>& batch) {
        std::set<std::string> known;
        for (const auto& ind : result.archive)
            known.insert(canonical_form(ind.genome.graph));
        for (const auto& ind : batch) {
            if (!known.insert(canonical_form(ind.genome.graph)).second) continue;
            result.archive.push_back(ind);
            if (io) {
                ordered_json j;
                j["hash"] = canonical_hash_hex(ind.genome.graph);
                j["accuracy"] = ind.obj.accuracy;
                j["params"] = ind.obj.params;
                j["flops"] = ind.obj.flops;
                j["generation"] = ind.generation;
                j["genome"] = ordered_json::parse(genome_to_json(ind.genome));
                archive_graphs << j.dump() << "\n";
            }
        }
        if (io) archive_graphs.flush();
    };
    auto snapshot = [&](int gen) {
        if (!io) return;
        std::ofstream pf(options.out_dir + "/population_" + std::to_string(gen) + ".jsonl");
        if (!options.file_header.empty()) pf << "# " << options.file_header << "\n";
        for (const auto& ind : population) {
            ordered_json j;
            j["accuracy"] = ind.obj.accuracy;
            j["params"] = ind.obj.params;
            j["flops"] = ind.obj.flops;
            j["genome"] = ordered_json::parse(genome_to_json(ind.genome));
            pf << j.dump() << "\n";
        }
        std::ofstream af(options.out_dir + "/archive.csv");
        af << archive_csv(result.archive, options.file_header);
    };

    if (population.empty()) {
        for (int q = 0; q < options.population; ++q)
            population.push_back({initial[q % initial.size()], {}, 0, -1, 0});
        evaluate_cached(population, 0);
        append_archive(population);
        fast_nondominated_sort(population);
        snapshot(0);
        start_gen = std::max(start_gen, 1);
    }

    for (int gen = start_gen; gen <= options.generations; ++gen) {
        // binary tournaments on (rank, crowding) pick the parents
        auto fronts = fast_nondominated_sort(population);
        for (const auto& front : fronts) {
            auto dist = crowding_distance(population, front);
            for (std::size_t q = 0; q < front.size(); ++q)
                population[front[q]].crowding = dist[q];
        }
        auto pick = [&]() -> const Individual& {
            const auto& a = population[rng.below(population.size())];
            const auto& b = population[rng.below(population.size())];
            if (a.rank != b.rank) return a.rank < b.rank ? a : b;
            return a.crowding >= b.crowding ? a : b;
        };
        std::vector<Individual> offspring;
        for (int q = 0; q < options.population; ++q) {
            Individual child;
            child.genome = mutate(pick().genome, rng, options.rules);
            offspring.push_back(std::move(child));
        }
        evaluate_cached(offspring, gen);
        append_archive(offspring);

        std::vector<Individual> pool = population;
        pool.insert(pool.end(), offspring.begin(), offspring.end());
        environmental_selection(pool, options.population);
        population = std::move(pool);
        result.generations_run = gen;
        snapshot(gen);
    }

    // final Pareto front over the archive
    std::vector<Individual> archive_copy = result.archive;
    auto fronts = fast_nondominated_sort(archive_copy);
    if (!fronts.empty())
        for (int a : fronts[0]) result.pareto.push_back(archive_copy[a]);
    for (std::size_t q = 0; q < archive_copy.size(); ++q)
        result.archive[q].rank = archive_copy[q].rank;
    if (io) {
        std::ofstream pf(options.out_dir + "/pareto.jsonl");
        if (!options.file_header.empty()) pf << "# " << options.file_header << "\n";
        for (const auto& ind : result.pareto) {
            ordered_json j;
            j["hash"] = canonical_hash_hex(ind.genome.graph);
            j["accuracy"] = ind.obj.accuracy;
            j["params"] = ind.obj.params;
            j["genome"] = ordered_json::parse(genome_to_json(ind.genome));
            pf << j.dump() << "\n";
        }
        std::ofstream af(options.out_dir + "/archive.csv");
        af << archive_csv(result.archive, options.file_header);
    }
    return result;
}

std::vector<Genome> seed_population(int count, const ConvGeometry& reference,
                                    std::uint64_t seed, const RuleConfig& rules) {
    std::vector<Genome> seeds;
    const bool is3d = reference.spatial_dims() == 3;
    for (NamedKind k : is3d ? named_kinds_3d() : named_kinds_2d_3x3()) {
        std::map<std::string, std::int64_t> ranks;
        for (const auto& arg : named_kind_rank_args(k)) ranks[arg] = 2;
        seeds.push_back({make_named(k, reference, ranks), 0});
    }
    EnumOptions opts;
    opts.rules = rules;
    opts.spatial_extent = reference.spatial_in[0];
    opts.channels_in = reference.channels_in;
    opts.channels_out = reference.channels_out;
    opts.stride = reference.stride;
    opts.padding = reference.padding;
    std::vector<int> filter(reference.filter.begin(), reference.filter.end());
    auto enumerated =
        enumerate_graphs(reference.spatial_dims(), filter, 1, opts);
    Rng rng(seed);
    while (static_cast<int>(seeds.size()) < count && !enumerated.graphs.empty()) {
        const auto& g = enumerated.graphs[rng.below(enumerated.graphs.size())];
        seeds.push_back({g, 0});
    }
    return seeds;
}

Evaluator make_surrogate_evaluator(const ConvGeometry& reference) {
    return [reference](const Genome& g) {
        EinconvGraph graph = g.graph;
        Objectives obj;
        obj.params = static_cast<double>(graph.parameter_count());
        obj.accuracy = 1.0 / (1.0 + obj.params);
        auto layer = init_params(graph, 1);
        obj.flops = static_cast<double>(complexity(layer).flops);
        obj.evaluated = true;
        return obj;
    };
}

Evaluator make_trainer_evaluator(const std::string& preset, std::int64_t train_samples,
                                 std::int64_t val_samples, std::int64_t epochs,
                                 std::uint64_t seed) {
    // the dataset is built once and shared; evaluation is pure per genome
    auto train_set = std::make_shared<Dataset>(
        make_blob_dataset(train_samples, 12, 4, seed ^ 0xabcdefull));
    auto val_set =
        std::make_shared<Dataset>(make_blob_dataset(val_samples, 12, 4, seed ^ 0x123456ull));
    return [preset, train_set, val_set, epochs, seed](const Genome& g) {
        auto spec = make_preset_with_graph(preset, g.graph);
        TrainConfig cfg;
        cfg.optimizer = OptimizerKind::Adam;
        cfg.learning_rate = 1e-3;
        cfg.weight_decay = 1e-6;
        cfg.batch_size = 16;
        cfg.epochs = epochs;
        cfg.seed = seed;
        auto trained = train(spec, *train_set, std::nullopt, cfg);
        Objectives obj;
        obj.accuracy = evaluate(trained.net, *val_set);
        obj.params = static_cast<double>(trained.net.parameter_count());
        std::uint64_t flops = 0;
        for (const auto& layer : trained.net.layers) flops += complexity(layer).flops;
        obj.flops = static_cast<double>(flops);
        obj.evaluated = true;
        return obj;
    };
}

}  // namespace tnconv
