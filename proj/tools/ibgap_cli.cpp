#include "ibgap/harness.hpp"
#include "ibgap/oracle.hpp"

#include <CLI11.hpp>

#include <iostream>

namespace {

using namespace ibgap;

struct Globals {
    std::uint64_t seed = 1;
    std::string config;
    std::string out = "out";
    std::optional<std::uint64_t> perturb_seed;
};

ExperimentConfig load_config(const Globals& g) {
    ExperimentConfig c = g.config.empty() ? config_from_json(Json::object()) : config_from_json(read_json(g.config));
    if (g.perturb_seed) c.perturb.rng_seed = *g.perturb_seed;
    return c;
}

struct TestData {
    LabeledDataset reference;
    LabeledDataset pool;
};

TestData load_test_sets(const ExperimentConfig& c, const std::string& variant) {
    const auto data = load_idx(c.images_path, c.labels_path);
    const auto split = make_split(data.size(), c.train_size, c.reference_size, c.data_seed);
    auto [ref, pool] = test_sets(data, split, variant, c.perturb);
    return {std::move(ref), std::move(pool)};
}

std::pair<StochasticEncoder, SoftmaxDecoder> load_model(const std::string& path) {
    return model_from_json(read_json(path));
}

void print(const std::string& s) { std::cout << s << std::flush; }

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Information-bottleneck generalization gap toolkit"};
    app.require_subcommand(1);
    Globals g;
    app.add_option("--seed", g.seed, "Run seed");
    app.add_option("--config", g.config, "Experiment configuration (JSON)");
    app.add_option("--out", g.out, "Output directory");
    app.add_option("--perturb-seed", g.perturb_seed, "Seed of the test-time perturbation");

    std::string images, labels, model_path, variant = "clean";
    double lambda = 0.0;
    double mi_term = -1.0;
    int max_translation = 5;
    double angle_range = 0.78539816339744830962;
    Index worlds = 100, trials = 1000;

    auto* ingest = app.add_subcommand("ingest", "Validate an IDX pair and store it uncompressed with a summary");
    ingest->add_option("--images", images)->required();
    ingest->add_option("--labels", labels)->required();

    auto* perturb_cmd = app.add_subcommand("perturb", "Rotate and translate every image of an IDX pair");
    perturb_cmd->add_option("--images", images)->required();
    perturb_cmd->add_option("--labels", labels)->required();
    perturb_cmd->add_option("--max-translation", max_translation);
    perturb_cmd->add_option("--angle-range", angle_range);

    auto* train = app.add_subcommand("train", "Train one model on the configured training split");
    train->add_option("--lambda", lambda)->required();

    auto* mi = app.add_subcommand("mi", "Variational MI bound of a model on a test variant");
    auto* gap = app.add_subcommand("gap", "Gap quantile of a model on a test variant");
    auto* bound = app.add_subcommand("bound", "Assembled bound of a model on a test variant");
    auto* qsweep = app.add_subcommand("quantize-sweep", "epsilon/r trade-off over the K grid");
    for (auto* sub : {mi, gap, bound, qsweep}) {
        sub->add_option("--model", model_path)->required();
        sub->add_option("--variant", variant)->check(CLI::IsMember({"clean", "perturbed"}));
    }
    qsweep->add_option("--mi-term", mi_term, "Coefficient of r(K); defaults to the bound's value");

    auto* sweep = app.add_subcommand("sweep", "Full lambda sweep with report files");
    auto* oracle = app.add_subcommand("oracle-verify", "Brute-force verification suite");
    oracle->add_option("--worlds", worlds);
    oracle->add_option("--trials", trials);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    const std::filesystem::path out = g.out;
    try {
        if (*ingest) {
            const auto data = load_idx(images, labels);
            data.validate();
            std::filesystem::create_directories(out);
            write_idx(data, out / "images-idx3-ubyte", out / "labels-idx1-ubyte");
            Json summary{{"samples", data.size()}, {"rows", data.rows}, {"cols", data.cols},
                         {"label_count", data.label_count}, {"label_frequencies", data.label_frequencies()},
                         {"provenance", data.provenance}};
            write_text(out / "dataset.json", summary.dump(2) + "\n");
            print(summary.dump(2) + "\n");
        } else if (*perturb_cmd) {
            PerturbSpec spec;
            spec.max_translation = max_translation;
            spec.angle_range = angle_range;
            spec.rng_seed = g.perturb_seed.value_or(g.seed);
            const auto shifted = perturb(load_idx(images, labels), spec);
            std::filesystem::create_directories(out);
            write_idx(shifted, out / "perturbed-images-idx3-ubyte", out / "perturbed-labels-idx1-ubyte");
            print(shifted.provenance + "\n");
        } else if (*train) {
            const auto c = load_config(g);
            const auto data = load_idx(c.images_path, c.labels_path);
            const auto split = make_split(data.size(), c.train_size, c.reference_size, c.data_seed);
            const auto trained = train_model(c.model, lambda, g.seed, data.select(split.train));
            write_text(out / "model.json", model_to_json(trained.encoder, trained.decoder).dump() + "\n");
            std::string curve = "epoch,objective\n";
            for (std::size_t e = 0; e < trained.loss_curve.size(); ++e)
                curve += std::to_string(e + 1) + "," + format_double(trained.loss_curve[e]) + "\n";
            write_text(out / "loss_curve.csv", curve);
            print("final objective " + format_double(trained.loss_curve.back()) + "\n");
        } else if (*mi) {
            const auto c = load_config(g);
            const auto [enc, dec] = load_model(model_path);
            const auto sets = load_test_sets(c, variant);
            Diagnostics diag;
            const auto est = mi_bound(enc, sets.reference.images, &diag);
            for (const auto& w : diag.warnings) std::cerr << "warning: " << w << "\n";
            write_text(out / "mi.json", to_json(est).dump(2) + "\n");
            print("total_kl " + format_double(est.total_kl) + "\nsqrt_bound " + format_double(est.sqrt_bound) + "\n");
        } else if (*gap) {
            const auto c = load_config(g);
            const auto [enc, dec] = load_model(model_path);
            const auto sets = load_test_sets(c, variant);
            const auto est = gap_quantile(enc, dec, sets.reference, sets.pool, c.mini_test_size, c.quantile_level,
                                          c.mc_samples, g.seed);
            write_text(out / "gap.json", to_json(est).dump(2) + "\n");
            print("gap_quantile " + format_double(est.quantile_value) + " over " +
                  std::to_string(est.mini_test_gaps.size()) + " mini-tests\n");
        } else if (*bound) {
            const auto c = load_config(g);
            const auto [enc, dec] = load_model(model_path);
            const auto sets = load_test_sets(c, variant);
            const auto ev = evaluate_model(enc, dec, sets.reference, sets.pool, c, g.seed);
            Json j = to_json(ev.bound);
            j["hellinger_std_error"] = json_number(ev.hellinger.std_error);
            j["gap_quantile"] = json_number(ev.gap.quantile_value);
            write_text(out / "bound.json", j.dump(2) + "\n");
            write_text(out / "quantize_sweep.csv", quantization_csv(ev.bound.sweep));
            print(j.dump(2) + "\n");
        } else if (*qsweep) {
            const auto c = load_config(g);
            const auto [enc, dec] = load_model(model_path);
            const auto sets = load_test_sets(c, variant);
            const auto eval = evaluate_losses(enc, dec, sets.reference, c.mc_samples, g.seed);
            if (mi_term < 0) {
                const auto ev = evaluate_model(enc, dec, sets.reference, sets.pool, c, g.seed);
                mi_term = mi_coefficient(mi_bound(enc, sets.reference.images), ev.bound.constants, c.mini_test_size);
            }
            std::vector<Index> grid;
            for (Index k : c.k_grid)
                if (k <= sets.reference.size()) grid.push_back(k);
            const auto res = sweep_k(eval.loss_table, grid, mi_term, g.seed);
            const std::string csv = quantization_csv(res.reports);
            write_text(out / "quantize_sweep.csv", csv);
            print(csv);
        } else if (*sweep) {
            const auto c = load_config(g);
            const auto art = lambda_sweep(c);
            emit_report(art, out);
            print(aggregates_csv(art.aggregates));
        } else if (*oracle) {
            bool all = true;
            for (const auto& r : run_oracle_suite(g.seed, worlds, trials)) {
                print(std::string(r.pass ? "PASS " : "FAIL ") + r.name + ": " + r.detail + "\n");
                all = all && r.pass;
            }
            return all ? 0 : 1;
        }
    } catch (const NumericError& e) {
        std::cerr << "numeric failure: " << e.what() << "\n";
        return 3;
    } catch (const ConfigError& e) {
        std::cerr << "invalid input: " << e.what() << "\n";
        return 2;
    } catch (const FormatError& e) {
        std::cerr << "invalid input: " << e.what() << "\n";
        return 2;
    } catch (const std::filesystem::filesystem_error& e) {
        std::cerr << "I/O error: " << e.what() << "\n";
        return 2;
    }
    return 0;
}
