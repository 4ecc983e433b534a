// Command-line front end: dataset generation, ground truth, forest
// build/query and the benchmark experiments. Progress and timing go to
// stderr; data goes to files or stdout only.

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "mqf/csv.hpp"
#include "mqf/data_io.hpp"
#include "mqf/experiments.hpp"
#include "mqf/forest.hpp"

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
    return std::chrono::duration<double>(Clock::now() - start).count();
}

struct GenOptions {
    std::string kind;
    std::size_t n = 100000;
    std::size_t dim = 0;  // 0 = kind-specific default
    std::size_t clusters = mqf::kDefaultClusters;
    double spread = mqf::kDefaultSpread;
    std::uint64_t seed = 1;
    std::string out;
    std::string labels_out;
};

mqf::DataMatrix generate(const GenOptions& opt, std::vector<std::uint32_t>* labels) {
    if (opt.kind == "uniform") {
        const std::size_t dim = opt.dim ? opt.dim : mqf::kDefaultUniformDim;
        return mqf::gen_uniform_sphere(opt.n, dim, opt.seed);
    }
    if (opt.kind == "clustered") {
        const std::size_t dim = opt.dim ? opt.dim : mqf::kDefaultClusteredDim;
        auto ds = mqf::gen_clustered_sphere(opt.n, dim, opt.clusters, opt.spread, opt.seed);
        if (labels) *labels = std::move(ds.labels);
        return std::move(ds.points);
    }
    throw std::invalid_argument("unknown generator kind: " + opt.kind);
}

void write_file(const std::filesystem::path& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open for writing: " + path.string());
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    if (!out) throw std::runtime_error("write failed: " + path.string());
}

void add_gen_flags(CLI::App* cmd, GenOptions& opt, bool kind_required) {
    auto* kind = cmd->add_option("--kind,--gen", opt.kind, "Generator: uniform or clustered");
    if (kind_required) kind->required();
    cmd->add_option("--n", opt.n, "Number of points");
    cmd->add_option("--d", opt.dim, "Dimension (default 200 uniform, 64 clustered)");
    cmd->add_option("--clusters", opt.clusters, "Cluster count (clustered)");
    cmd->add_option("--spread", opt.spread, "Cluster spread (clustered)");
}

int run(int argc, char** argv) {
    CLI::App app{"RP-Forest / MQ-Forest benchmark toolkit"};
    app.require_subcommand(1);

    // ---- gen ----
    GenOptions gen_opt;
    auto* gen = app.add_subcommand("gen", "Generate a synthetic dataset");
    add_gen_flags(gen, gen_opt, true);
    gen->add_option("--seed", gen_opt.seed, "RNG seed");
    gen->add_option("--out", gen_opt.out, "Output vector file")->required();
    gen->add_option("--labels-out", gen_opt.labels_out, "Cluster assignment CSV (clustered)");

    // ---- ground-truth ----
    struct {
        std::string data, queries, out;
        std::uint32_t k = 100;
    } gt_opt;
    auto* gt = app.add_subcommand("ground-truth", "Exact k-nearest-neighbour lists");
    gt->add_option("--data", gt_opt.data, "Dataset vector file")->required();
    gt->add_option("--queries", gt_opt.queries, "Query vector file")->required();
    gt->add_option("--k", gt_opt.k, "Neighbours per query");
    gt->add_option("--out", gt_opt.out, "Output prefix (.ids.ivecs / .dists.fvecs)")->required();

    // ---- build ----
    struct {
        std::string data, out;
        std::uint32_t trees = 32, ns = 500;
        std::uint64_t seed = 1;
    } build_opt;
    auto* build = app.add_subcommand("build", "Build a forest index");
    build->add_option("--data", build_opt.data, "Dataset vector file")->required();
    build->add_option("--trees", build_opt.trees, "Tree count");
    build->add_option("--ns", build_opt.ns, "Leaf capacity");
    build->add_option("--seed", build_opt.seed, "RNG seed");
    build->add_option("--out", build_opt.out, "Output index file")->required();

    // ---- query ----
    struct {
        std::string data, index, queries, mode = "mq", out;
        std::uint32_t k = 100, v = 8;
    } query_opt;
    auto* query = app.add_subcommand("query", "Query a saved forest");
    query->add_option("--data", query_opt.data, "Dataset vector file")->required();
    query->add_option("--index", query_opt.index, "Forest index file")->required();
    query->add_option("--queries", query_opt.queries, "Query vector file")->required();
    query->add_option("--k", query_opt.k, "Neighbours per query");
    query->add_option("--mode", query_opt.mode, "rp or mq")
        ->check(CLI::IsMember({"rp", "mq"}));
    query->add_option("--v", query_opt.v, "Warm-up trees (mq)");
    query->add_option("--out", query_opt.out, "Output CSV (default stdout)");

    // ---- bench ----
    mqf::ExperimentConfig cfg;
    GenOptions bench_gen;
    std::string bench_data;
    std::string bench_mode = "both";
    std::string bench_out = ".";
    auto* bench = app.add_subcommand("bench", "Run a benchmark experiment");
    bench->require_subcommand(1);
    std::vector<CLI::App*> bench_cmds;
    for (const char* name : {"recall", "hash-failure", "kappa", "delta-knn", "covariance", "clt"}) {
        auto* cmd = bench->add_subcommand(name);
        cmd->add_option("--data", bench_data, "Dataset vector file");
        add_gen_flags(cmd, bench_gen, false);
        cmd->add_option("--queries", cfg.num_queries, "Query count");
        cmd->add_option("--k", cfg.k, "Neighbours per query");
        cmd->add_option("--trees", cfg.tree_counts, "Tree counts (recall)")->delimiter(',');
        cmd->add_option("--ns", cfg.leaf_capacity, "Leaf capacity");
        cmd->add_option("--v", cfg.warmup_trees, "Warm-up trees");
        cmd->add_option("--seed", cfg.seed, "RNG seed");
        cmd->add_option("--mode", bench_mode, "rp, mq or both")
            ->check(CLI::IsMember({"rp", "mq", "both"}));
        cmd->add_option("--out", bench_out, "Output directory");
        cmd->add_option("--functions", cfg.num_functions, "Hash functions (hash-failure)");
        cmd->add_option("--m-list", cfg.m_values, "Neighbourhood ranks (kappa)")->delimiter(',');
        cmd->add_option("--delta-trees", cfg.delta_trees, "Tree count (delta-knn)");
        cmd->add_option("--planes", cfg.num_planes, "Planes per query (covariance)");
        cmd->add_option("--b-tol", cfg.b_tol, "Height tolerance (covariance)");
        cmd->add_option("--r", cfg.sample_rank, "Sample rank (clt)");
        bench_cmds.push_back(cmd);
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;  // config errors exit 2, --help exits 0
    }

    if (*gen) {
        const auto start = Clock::now();
        std::vector<std::uint32_t> labels;
        const mqf::DataMatrix data =
            generate(gen_opt, gen_opt.labels_out.empty() ? nullptr : &labels);
        mqf::save_vectors(data, gen_opt.out);
        if (!gen_opt.labels_out.empty()) {
            mqf::CsvWriter csv;
            csv.header("id", "cluster");
            for (std::size_t i = 0; i < labels.size(); ++i) csv.row(i, labels[i]);
            write_file(gen_opt.labels_out, csv.str());
        }
        std::cerr << "wrote " << data.size() << "x" << data.dim() << " vectors to " << gen_opt.out
                  << " in " << seconds_since(start) << " s\n";
        return 0;
    }

    if (*gt) {
        const auto start = Clock::now();
        const mqf::DataMatrix data = mqf::load_vectors(gt_opt.data);
        const mqf::DataMatrix queries = mqf::load_vectors(gt_opt.queries);
        const mqf::GroundTruth truth = mqf::brute_force_knn(data, queries, gt_opt.k);
        mqf::save_ground_truth(truth, gt_opt.out + ".ids.ivecs", gt_opt.out + ".dists.fvecs");
        std::cerr << "ground truth for " << queries.size() << " queries (k=" << gt_opt.k << ") in "
                  << seconds_since(start) << " s\n";
        return 0;
    }

    if (*build) {
        const auto start = Clock::now();
        const mqf::DataMatrix data = mqf::load_vectors(build_opt.data);
        const mqf::Forest forest =
            mqf::Forest::build(data, build_opt.trees, build_opt.ns, build_opt.seed);
        forest.save(build_opt.out);
        std::cerr << "built " << build_opt.trees << " trees over " << data.size() << " points in "
                  << seconds_since(start) << " s\n";
        return 0;
    }

    if (*query) {
        const auto start = Clock::now();
        const mqf::DataMatrix data = mqf::load_vectors(query_opt.data);
        const mqf::DataMatrix queries = mqf::load_vectors(query_opt.queries);
        const mqf::Forest forest = mqf::Forest::load(query_opt.index, data);
        mqf::CsvWriter csv;
        csv.header("query_index", "rank", "id", "distance");
        for (std::uint32_t qi = 0; qi < queries.size(); ++qi) {
            const mqf::UnitVector q = queries.row_unit(qi);
            const mqf::QueryResult res =
                query_opt.mode == "rp"
                    ? forest.query_rp(q, query_opt.k)
                    : forest.query_mq(q, query_opt.k,
                                      std::min<std::uint32_t>(query_opt.v,
                                                              static_cast<std::uint32_t>(
                                                                  forest.num_trees())));
            for (std::size_t rank = 0; rank < res.neighbours.size(); ++rank)
                csv.row(qi, rank, res.neighbours[rank].first, res.neighbours[rank].second);
        }
        if (query_opt.out.empty())
            std::cout << csv.str();
        else
            write_file(query_opt.out, csv.str());
        std::cerr << queries.size() << " queries in " << seconds_since(start) << " s\n";
        return 0;
    }

    // bench
    if (bench_mode == "rp") cfg.mode = mqf::BenchMode::rp;
    else if (bench_mode == "mq") cfg.mode = mqf::BenchMode::mq;
    else cfg.mode = mqf::BenchMode::both;

    mqf::DataMatrix data(2);
    if (!bench_data.empty()) {
        data = mqf::load_vectors(bench_data);
    } else if (!bench_gen.kind.empty()) {
        bench_gen.seed = cfg.seed;
        data = generate(bench_gen, nullptr);
    } else {
        throw std::invalid_argument("bench needs --data or --gen");
    }
    std::cerr << "dataset: " << data.size() << "x" << data.dim() << "\n";

    const char* names[] = {"recall", "hash-failure", "kappa", "delta-knn", "covariance", "clt"};
    mqf::ExperimentOutput (*runners[])(const mqf::ExperimentConfig&, const mqf::DataMatrix&) = {
        mqf::run_recall_experiment,    mqf::run_hash_failure_experiment,
        mqf::run_kappa_experiment,     mqf::run_delta_knn_experiment,
        mqf::run_covariance_experiment, mqf::run_clt_experiment};
    for (std::size_t i = 0; i < bench_cmds.size(); ++i) {
        if (!(*bench_cmds[i])) continue;
        const auto start = Clock::now();
        const mqf::ExperimentOutput out = runners[i](cfg, data);
        std::filesystem::create_directories(bench_out);
        for (const auto& [name, csv] : out.files) {
            write_file(std::filesystem::path(bench_out) / name, csv);
            std::cerr << "wrote " << (std::filesystem::path(bench_out) / name).string() << "\n";
        }
        std::cerr << names[i] << " finished in " << seconds_since(start) << " s\n";
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    try {
        return run(argc, argv);
    } catch (const std::invalid_argument& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}
