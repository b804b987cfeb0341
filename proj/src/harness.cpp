#include "ibgap/harness.hpp"

#include <chrono>
#include <map>
#include <numeric>
#include <set>
#include <sstream>

namespace ibgap {

std::vector<double> default_lambda_grid(EncoderFamily family, std::size_t points) {
    const double lo = family == EncoderFamily::rbm ? -5.0 : -4.0;
    const double hi = family == EncoderFamily::rbm ? -1.0 : 1.0;
    std::vector<double> grid;
    for (std::size_t i = 0; i < points; ++i) {
        const double t = points == 1 ? 0.0 : static_cast<double>(i) / static_cast<double>(points - 1);
        grid.push_back(std::pow(10.0, lo + t * (hi - lo)));
    }
    return grid;
}

void apply_paper_scale(ExperimentConfig& config) {
    config.paper_scale = true;
    config.train_size = 5000;
    config.model.epochs = 200;
    config.model.code = 256;
    switch (config.model.family) {
    case EncoderFamily::gaussian: config.model.hidden = 512; break;
    case EncoderFamily::lognormal: config.model.hidden = 256; break;
    case EncoderFamily::rbm: config.model.decoder_epochs = 500; break;
    }
}

void ExperimentConfig::finalize() {
    model.validate();
    if (lambda_grid.empty()) lambda_grid = default_lambda_grid(model.family);
    for (double l : lambda_grid)
        if (!(l >= 0) || !std::isfinite(l)) throw ConfigError("lambda_grid entries must be finite and >= 0");
    if (!std::is_sorted(lambda_grid.begin(), lambda_grid.end())) throw ConfigError("lambda_grid must be sorted ascending");
    if (seeds.empty()) throw ConfigError("at least one seed is required");
    if (train_size < 1 || reference_size < 1 || mini_test_size < 1) throw ConfigError("split sizes must be >= 1");
    if (!(delta > 0 && delta < 1)) throw ConfigError("delta must lie in (0, 1)");
    if (std::abs(quantile_level - (1.0 - delta)) > 1e-12) throw ConfigError("quantile_level must equal 1 - delta");
    if (test_variants.empty()) throw ConfigError("at least one test variant is required");
    for (const auto& v : test_variants)
        if (v != "clean" && v != "perturbed") throw ConfigError("unknown test variant '" + v + "'");
    if (k_grid.empty()) throw ConfigError("k_grid must be nonempty");
    for (Index k : k_grid)
        if (k < 1) throw ConfigError("k_grid entries must be >= 1");
    if (mc_samples < 1 || hellinger_draws < 1) throw ConfigError("sample counts must be >= 1");
    if (vol_u && !(*vol_u > 0)) throw ConfigError("vol_u must be positive");
    perturb.validate();
}

namespace {

template <class T>
void read_opt(const Json& j, const char* key, T& out) {
    if (j.contains(key)) out = j.at(key).get<T>();
}

PerturbOrder order_from_string(const std::string& s) {
    if (s == "rotate_then_translate") return PerturbOrder::rotate_then_translate;
    if (s == "translate_then_rotate") return PerturbOrder::translate_then_rotate;
    throw ConfigError("unknown perturbation order '" + s + "'");
}

std::string to_string(PerturbOrder o) {
    return o == PerturbOrder::rotate_then_translate ? "rotate_then_translate" : "translate_then_rotate";
}

} // namespace

ExperimentConfig config_from_json(const Json& j) {
    ExperimentConfig c;
    try {
        if (!j.is_object()) throw ConfigError("config must be a JSON object");
        if (j.contains("encoder_family")) c.model.family = family_from_string(j.at("encoder_family").get<std::string>());
        if (j.value("paper_scale", false)) apply_paper_scale(c);
        if (j.contains("model")) c.model = model_settings_from_json(j.at("model"), c.model);
        if (j.contains("encoder_family")) c.model.family = family_from_string(j.at("encoder_family").get<std::string>());
        read_opt(j, "lambda_grid", c.lambda_grid);
        read_opt(j, "seeds", c.seeds);
        read_opt(j, "train_size", c.train_size);
        read_opt(j, "reference_size", c.reference_size);
        read_opt(j, "mini_test_size", c.mini_test_size);
        read_opt(j, "delta", c.delta);
        c.quantile_level = 1.0 - c.delta;
        read_opt(j, "quantile_level", c.quantile_level);
        read_opt(j, "test_variants", c.test_variants);
        read_opt(j, "k_grid", c.k_grid);
        read_opt(j, "mc_samples", c.mc_samples);
        read_opt(j, "hellinger_draws", c.hellinger_draws);
        read_opt(j, "data_seed", c.data_seed);
        read_opt(j, "images", c.images_path);
        read_opt(j, "labels", c.labels_path);
        read_opt(j, "out_dir", c.out_dir);
        if (j.contains("vol_u") && !j.at("vol_u").is_null()) c.vol_u = j.at("vol_u").get<double>();
        if (j.contains("perturb")) {
            const auto& p = j.at("perturb");
            read_opt(p, "max_translation", c.perturb.max_translation);
            read_opt(p, "angle_range", c.perturb.angle_range);
            read_opt(p, "rng_seed", c.perturb.rng_seed);
            if (p.contains("order")) c.perturb.order = order_from_string(p.at("order").get<std::string>());
        }
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("config: ") + e.what());
    }
    c.finalize();
    return c;
}

Json to_json(const ExperimentConfig& c) {
    Json lambdas = Json::array();
    for (double l : c.lambda_grid) lambdas.push_back(l);
    return Json{{"encoder_family", to_string(c.model.family)},
                {"lambda_grid", lambdas},
                {"seeds", c.seeds},
                {"train_size", c.train_size},
                {"reference_size", c.reference_size},
                {"mini_test_size", c.mini_test_size},
                {"quantile_level", c.quantile_level},
                {"delta", c.delta},
                {"test_variants", c.test_variants},
                {"k_grid", c.k_grid},
                {"mc_samples", c.mc_samples},
                {"hellinger_draws", c.hellinger_draws},
                {"data_seed", c.data_seed},
                {"perturb",
                 {{"max_translation", c.perturb.max_translation},
                  {"angle_range", c.perturb.angle_range},
                  {"rng_seed", c.perturb.rng_seed},
                  {"order", to_string(c.perturb.order)}}},
                {"vol_u", c.vol_u ? Json(*c.vol_u) : Json(nullptr)},
                {"images", c.images_path},
                {"labels", c.labels_path},
                {"out_dir", c.out_dir},
                {"paper_scale", c.paper_scale},
                {"model", to_json(c.model)}};
}

DataSplit make_split(Index n, Index train_size, Index reference_size, std::uint64_t seed) {
    if (train_size + reference_size > n)
        throw ConfigError("train (" + std::to_string(train_size) + ") + reference (" + std::to_string(reference_size) +
                          ") exceed the " + std::to_string(n) + " available samples");
    std::vector<Index> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), Index{0});
    Rng rng = make_rng(seed, 0x5917);
    std::shuffle(order.begin(), order.end(), rng);
    DataSplit s;
    const auto a = order.begin() + train_size;
    const auto b = a + reference_size;
    s.train.assign(order.begin(), a);
    s.reference.assign(a, b);
    s.pool.assign(b, order.end());

    std::set<Index> seen;
    for (const auto* part : {&s.train, &s.reference, &s.pool})
        for (Index i : *part)
            if (!seen.insert(i).second) throw ConfigError("data split overlaps at index " + std::to_string(i));
    if (static_cast<Index>(seen.size()) != n) throw ConfigError("data split does not cover the dataset");
    return s;
}

std::pair<LabeledDataset, LabeledDataset> test_sets(const LabeledDataset& data, const DataSplit& split,
                                                    const std::string& variant, const PerturbSpec& perturb_spec) {
    std::vector<Index> test = split.reference;
    test.insert(test.end(), split.pool.begin(), split.pool.end());
    LabeledDataset all = data.select(test);
    if (variant == "perturbed") all = perturb(all, perturb_spec);
    else if (variant != "clean") throw ConfigError("unknown test variant '" + variant + "'");
    std::vector<Index> ref(split.reference.size());
    std::iota(ref.begin(), ref.end(), Index{0});
    std::vector<Index> pool(split.pool.size());
    std::iota(pool.begin(), pool.end(), static_cast<Index>(ref.size()));
    return {all.select(ref), all.select(pool)};
}

Evaluation evaluate_model(const StochasticEncoder& enc, const SoftmaxDecoder& dec, const LabeledDataset& reference,
                          const LabeledDataset& pool, const ExperimentConfig& config, std::uint64_t seed) {
    const auto ref_eval = evaluate_losses(enc, dec, reference, config.mc_samples, seed);
    const auto pool_eval = evaluate_losses(enc, dec, pool, config.mc_samples, seed);

    Evaluation out;
    const auto blocks = mini_test_blocks(pool.size(), config.mini_test_size, seed);
    out.gap = gap_from_losses(ref_eval.losses.mean(),
                              {pool_eval.losses.data(), static_cast<std::size_t>(pool_eval.losses.size())}, blocks,
                              config.quantile_level);
    out.mi = mi_bound(enc, reference.images);

    const Index m = code_size(enc);
    const bool binary = family_of(enc) == EncoderFamily::rbm;
    double log_vol = 0.0;
    if (binary) log_vol = static_cast<double>(m) * std::log(2.0);
    else if (config.vol_u) log_vol = std::log(*config.vol_u);
    else log_vol = log_box_volume(ref_eval.code_min.cwiseMin(pool_eval.code_min),
                                  ref_eval.code_max.cwiseMax(pool_eval.code_max));
    out.eta = std::max(std::min(ref_eval.min_decoder_prob, pool_eval.min_decoder_prob), kProbFloor);
    double p_y_min = 1.0;
    for (double f : reference.label_frequencies())
        if (f > 0) p_y_min = std::min(p_y_min, f);
    const auto constants =
        DeltaConstants::compute(config.delta, reference.label_count, log_vol, p_y_min, out.eta);

    const Index n = config.mini_test_size;
    std::vector<Index> grid;
    for (Index k : config.k_grid)
        if (k <= reference.size()) grid.push_back(k);
    if (grid.empty()) throw ConfigError("no K in k_grid fits the reference set");
    const auto sweep = sweep_k(ref_eval.loss_table, grid, mi_coefficient(out.mi, constants, n), seed);

    const bool exact = binary && m <= kMaxEnumerationBits;
    Rng bank_rng = make_rng(seed, 0x4e11);
    const auto qm = quantized_model(sweep.partitions[sweep.best], ref_eval.loss_table, enc, reference,
                                    exact ? CodeMode::exact : CodeMode::monte_carlo, config.hellinger_draws, bank_rng);
    const MatrixXd model_table = decoder_prob_batch(dec, qm.codes).transpose();
    if (exact) out.hellinger = {hellinger(model_table, qm.decoder_table, qm.code_weights), 0.0};
    else out.hellinger = hellinger_bank(model_table, qm.decoder_table);

    out.bound = assemble_bound(out.mi, sweep.reports, out.hellinger.value, constants, n);
    return out;
}

RunArtifact lambda_sweep(const ExperimentConfig& config_in, const LabeledDataset& data) {
    ExperimentConfig config = config_in;
    config.finalize();
    data.validate();
    const DataSplit split = make_split(data.size(), config.train_size, config.reference_size, config.data_seed);
    if (static_cast<Index>(split.pool.size()) < config.mini_test_size)
        throw ConfigError("pool of " + std::to_string(split.pool.size()) + " samples cannot hold one mini-test of " +
                          std::to_string(config.mini_test_size));
    const LabeledDataset train = data.select(split.train);
    std::vector<std::pair<LabeledDataset, LabeledDataset>> variants;
    for (const auto& v : config.test_variants) variants.push_back(test_sets(data, split, v, config.perturb));

    RunArtifact art;
    art.config = config;
    for (double lambda : config.lambda_grid)
        for (std::uint64_t seed : config.seeds) {
            const auto start = std::chrono::steady_clock::now();
            std::optional<TrainedModel> model;
            std::string train_error;
            try {
                model = train_model(config.model, lambda, seed, train);
            } catch (const std::exception& e) {
                train_error = e.what();
            }
            for (std::size_t v = 0; v < variants.size(); ++v) {
                RunRecord rec;
                rec.lambda = lambda;
                rec.seed = seed;
                rec.variant = config.test_variants[v];
                if (!model) {
                    rec.ok = false;
                    rec.error = "training failed: " + train_error;
                    art.records.push_back(std::move(rec));
                    continue;
                }
                rec.loss_curve = model->loss_curve;
                rec.final_objective = model->loss_curve.empty() ? 0.0 : model->loss_curve.back();
                try {
                    auto ev = evaluate_model(model->encoder, model->decoder, variants[v].first, variants[v].second,
                                             config, seed);
                    rec.mi = std::move(ev.mi);
                    rec.gap = std::move(ev.gap);
                    rec.bound = std::move(ev.bound);
                    rec.hellinger = ev.hellinger;
                    rec.eta = ev.eta;
                } catch (const std::exception& e) {
                    rec.ok = false;
                    rec.error = std::string("evaluation failed: ") + e.what();
                }
                art.records.push_back(std::move(rec));
            }
            const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
            art.timings.push_back({lambda, seed, secs});
        }
    art.aggregates = aggregate(art.records);
    return art;
}

RunArtifact lambda_sweep(const ExperimentConfig& config) {
    return lambda_sweep(config, load_idx(config.images_path, config.labels_path));
}

std::vector<AggregateRecord> aggregate(const std::vector<RunRecord>& records) {
    std::vector<std::string> variant_order;
    std::map<std::pair<std::string, double>, AggregateRecord> acc;
    std::vector<std::pair<std::string, double>> key_order;
    for (const auto& r : records) {
        if (std::find(variant_order.begin(), variant_order.end(), r.variant) == variant_order.end())
            variant_order.push_back(r.variant);
        const auto key = std::pair{r.variant, r.lambda};
        auto [it, inserted] = acc.try_emplace(key);
        if (inserted) {
            it->second.variant = r.variant;
            it->second.lambda = r.lambda;
            key_order.push_back(key);
        }
        if (!r.ok) continue;
        auto& a = it->second;
        ++a.runs;
        a.mi_sqrt_bound += r.mi.sqrt_bound;
        a.gap_quantile += r.gap.quantile_value;
        a.bound_total += r.bound.total;
    }
    std::vector<AggregateRecord> out;
    for (const auto& variant : variant_order) {
        std::vector<AggregateRecord> rows;
        for (const auto& key : key_order)
            if (key.first == variant) rows.push_back(acc.at(key));
        std::sort(rows.begin(), rows.end(), [](const auto& a, const auto& b) { return a.lambda < b.lambda; });
        const double nan = std::numeric_limits<double>::quiet_NaN();
        for (auto& a : rows) {
            const auto runs = static_cast<double>(a.runs);
            a.mi_sqrt_bound = a.runs ? a.mi_sqrt_bound / runs : nan;
            a.gap_quantile = a.runs ? a.gap_quantile / runs : nan;
            a.bound_total = a.runs ? a.bound_total / runs : nan;
        }
        auto normalise = [&rows](double AggregateRecord::*src, double AggregateRecord::*dst) {
            double lo = std::numeric_limits<double>::infinity();
            double hi = -lo;
            for (const auto& a : rows)
                if (std::isfinite(a.*src)) {
                    lo = std::min(lo, a.*src);
                    hi = std::max(hi, a.*src);
                }
            for (auto& a : rows) {
                if (!std::isfinite(a.*src)) a.*dst = std::numeric_limits<double>::quiet_NaN();
                else a.*dst = hi > lo ? (a.*src - lo) / (hi - lo) : 0.0;
            }
        };
        normalise(&AggregateRecord::mi_sqrt_bound, &AggregateRecord::mi_norm);
        normalise(&AggregateRecord::gap_quantile, &AggregateRecord::gap_norm);
        out.insert(out.end(), rows.begin(), rows.end());
    }
    return out;
}

namespace {

std::string join(const std::vector<std::string>& cells) {
    std::string line;
    for (std::size_t i = 0; i < cells.size(); ++i) {
        if (i) line += ',';
        line += cells[i];
    }
    return line + '\n';
}

} // namespace

std::string runs_csv(const std::vector<RunRecord>& records) {
    std::string out = join({"lambda", "seed", "variant", "status", "mi_sqrt_bound", "mi_total_kl", "gap_quantile",
                            "reference_risk", "mini_tests", "bound_total", "quantization_term", "mi_term",
                            "hellinger_term", "constant_term", "chosen_k", "hellinger", "hellinger_std_error", "eta",
                            "log_vol_u", "final_train_objective"});
    const std::string nan = "nan";
    for (const auto& r : records) {
        std::vector<std::string> row{format_double(r.lambda), std::to_string(r.seed), r.variant, r.ok ? "ok" : "failed"};
        if (r.ok) {
            for (double v : {r.mi.sqrt_bound, r.mi.total_kl, r.gap.quantile_value, r.gap.reference_risk})
                row.push_back(format_double(v));
            row.push_back(std::to_string(r.gap.mini_test_gaps.size()));
            for (double v : {r.bound.total, r.bound.quantization_term, r.bound.mi_term, r.bound.hellinger_term,
                             r.bound.constant_term})
                row.push_back(format_double(v));
            row.push_back(std::to_string(r.bound.chosen_k));
            for (double v : {r.hellinger.value, r.hellinger.std_error, r.eta, r.bound.constants.log_vol_u,
                             r.final_objective})
                row.push_back(format_double(v));
        } else {
            row.resize(20, nan);
        }
        out += join(row);
    }
    return out;
}

std::string aggregates_csv(const std::vector<AggregateRecord>& aggregates) {
    std::string out = join({"variant", "lambda", "runs", "mi_sqrt_bound", "gap_quantile", "bound_total",
                            "mi_sqrt_bound_norm", "gap_quantile_norm"});
    for (const auto& a : aggregates)
        out += join({a.variant, format_double(a.lambda), std::to_string(a.runs), format_double(a.mi_sqrt_bound),
                     format_double(a.gap_quantile), format_double(a.bound_total), format_double(a.mi_norm),
                     format_double(a.gap_norm)});
    return out;
}

std::string timings_csv(const std::vector<TimingRecord>& timings) {
    std::string out = join({"lambda", "seed", "wall_time_s"});
    for (const auto& t : timings)
        out += join({format_double(t.lambda), std::to_string(t.seed), format_double(t.wall_time_s)});
    return out;
}

std::string quantization_csv(const std::vector<QuantizationReport>& reports) {
    std::string out = join({"K", "epsilon_hat", "r_hat", "objective"});
    for (const auto& r : reports)
        out += join({std::to_string(r.requested_k), format_double(r.epsilon_hat), format_double(r.r_hat),
                     format_double(r.objective)});
    return out;
}

void emit_report(const RunArtifact& artifact, const std::filesystem::path& out_dir) {
    std::error_code ec;
    std::filesystem::create_directories(out_dir, ec);
    if (ec || !std::filesystem::is_directory(out_dir))
        throw ConfigError("cannot create output directory " + out_dir.string());
    write_text(out_dir / "runs.csv", runs_csv(artifact.records));
    write_text(out_dir / "aggregates.csv", aggregates_csv(artifact.aggregates));
    write_text(out_dir / "timings.csv", timings_csv(artifact.timings));
    write_text(out_dir / "config.json", to_json(artifact.config).dump(2) + "\n");

    Json runs = Json::array();
    for (const auto& r : artifact.records) {
        Json j{{"lambda", r.lambda}, {"seed", r.seed}, {"variant", r.variant}, {"ok", r.ok}};
        if (!r.ok) j["error"] = r.error;
        else {
            j["mi"] = to_json(r.mi);
            j["gap"] = to_json(r.gap);
            j["bound"] = to_json(r.bound);
            j["hellinger_std_error"] = json_number(r.hellinger.std_error);
            j["eta"] = json_number(r.eta);
        }
        Json curve = Json::array();
        for (double v : r.loss_curve) curve.push_back(json_number(v));
        j["loss_curve"] = std::move(curve);
        runs.push_back(std::move(j));
    }
    write_text(out_dir / "runs.json", runs.dump(2) + "\n");
}

std::size_t count_increases(const std::vector<double>& values) {
    std::size_t n = 0;
    for (std::size_t i = 1; i < values.size(); ++i)
        if (values[i] > values[i - 1]) ++n;
    return n;
}

std::vector<std::vector<std::string>> parse_csv(const std::string& text) {
    std::vector<std::vector<std::string>> rows;
    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::vector<std::string> cells;
        std::string cell;
        std::istringstream ls(line);
        while (std::getline(ls, cell, ',')) cells.push_back(cell);
        if (!line.empty() && line.back() == ',') cells.emplace_back();
        rows.push_back(std::move(cells));
    }
    return rows;
}

} // namespace ibgap
