#include "ibgap/serialize.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

namespace ibgap {

namespace {

Json matrix_json(const MatrixXd& m) {
    Json data = Json::array();
    for (Index r = 0; r < m.rows(); ++r)
        for (Index c = 0; c < m.cols(); ++c) data.push_back(m(r, c));
    return Json{{"rows", m.rows()}, {"cols", m.cols()}, {"data", std::move(data)}};
}

MatrixXd matrix_from(const Json& j, const char* what) {
    try {
        const Index rows = j.at("rows").get<Index>();
        const Index cols = j.at("cols").get<Index>();
        const auto& data = j.at("data");
        if (rows < 0 || cols < 0 || static_cast<Index>(data.size()) != rows * cols)
            throw FormatError(std::string(what) + ": data length does not match shape");
        MatrixXd m(rows, cols);
        for (Index r = 0; r < rows; ++r)
            for (Index c = 0; c < cols; ++c) m(r, c) = data[static_cast<std::size_t>(r * cols + c)].get<double>();
        return m;
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string(what) + ": " + e.what());
    }
}

Json vector_json(const VectorXd& v) {
    Json out = Json::array();
    for (Index i = 0; i < v.size(); ++i) out.push_back(json_number(v[i]));
    return out;
}

VectorXd vector_from(const Json& j, const char* what) {
    if (!j.is_array()) throw FormatError(std::string(what) + ": expected an array");
    VectorXd v(static_cast<Index>(j.size()));
    for (std::size_t i = 0; i < j.size(); ++i) v[static_cast<Index>(i)] = j[i].get<double>();
    return v;
}

Json stack_json(const LayerStack& stack) {
    Json out = Json::array();
    for (const auto& l : stack) out.push_back(to_json(l));
    return out;
}

LayerStack stack_from(const Json& j) {
    LayerStack out;
    for (const auto& l : j) out.push_back(layer_from_json(l));
    return out;
}

template <class F>
auto guarded(const char* what, F&& f) {
    try {
        return f();
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string(what) + ": " + e.what());
    }
}

} // namespace

std::string format_double(double v) {
    if (std::isnan(v)) return "nan";
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof buf, v);
    return {buf, res.ptr};
}

Json json_number(double v) {
    if (std::isfinite(v)) return v;
    return format_double(v);
}

Json to_json(const DenseLayer& layer) {
    return Json{{"activation", to_string(layer.activation)},
                {"weights", matrix_json(layer.weights)},
                {"biases", vector_json(layer.biases)}};
}

DenseLayer layer_from_json(const Json& j) {
    return guarded("layer", [&] {
        DenseLayer l;
        l.activation = activation_from_string(j.at("activation").get<std::string>());
        l.weights = matrix_from(j.at("weights"), "layer weights");
        l.biases = vector_from(j.at("biases"), "layer biases");
        l.validate();
        return l;
    });
}

Json to_json(const StochasticEncoder& enc) {
    Json out{{"family", to_string(family_of(enc))}};
    if (const auto* g = std::get_if<GaussianEncoder>(&enc)) {
        out["trunk"] = stack_json(g->trunk);
        out["mu_head"] = to_json(g->mu_head);
        out["logvar_head"] = to_json(g->logvar_head);
    } else if (const auto* l = std::get_if<LogNormalEncoder>(&enc)) {
        out["f_net"] = stack_json(l->f_net);
        out["alpha_net"] = stack_json(l->alpha_net);
        out["alpha_scale"] = l->alpha_scale;
        out["prior_mu"] = vector_json(l->prior_mu);
        out["prior_logsigma"] = vector_json(l->prior_logsigma);
    } else {
        const auto& r = std::get<RBMEncoder>(enc);
        out["weights"] = matrix_json(r.weights);
        out["hidden_bias"] = vector_json(r.hidden_bias);
        out["visible_bias"] = vector_json(r.visible_bias);
    }
    return out;
}

StochasticEncoder encoder_from_json(const Json& j) {
    return guarded("encoder", [&]() -> StochasticEncoder {
        switch (family_from_string(j.at("family").get<std::string>())) {
        case EncoderFamily::gaussian: {
            GaussianEncoder g;
            g.trunk = stack_from(j.at("trunk"));
            g.mu_head = layer_from_json(j.at("mu_head"));
            g.logvar_head = layer_from_json(j.at("logvar_head"));
            g.validate();
            return g;
        }
        case EncoderFamily::lognormal: {
            LogNormalEncoder l;
            l.f_net = stack_from(j.at("f_net"));
            l.alpha_net = stack_from(j.at("alpha_net"));
            l.alpha_scale = j.at("alpha_scale").get<double>();
            l.prior_mu = vector_from(j.at("prior_mu"), "prior_mu");
            l.prior_logsigma = vector_from(j.at("prior_logsigma"), "prior_logsigma");
            l.validate();
            return l;
        }
        case EncoderFamily::rbm: {
            RBMEncoder r;
            r.weights = matrix_from(j.at("weights"), "rbm weights");
            r.hidden_bias = vector_from(j.at("hidden_bias"), "hidden_bias");
            r.visible_bias = vector_from(j.at("visible_bias"), "visible_bias");
            r.validate();
            return r;
        }
        }
        throw FormatError("encoder: unknown family");
    });
}

Json to_json(const SoftmaxDecoder& dec) {
    return Json{{"weights", matrix_json(dec.weights)}, {"biases", vector_json(dec.biases)}};
}

SoftmaxDecoder decoder_from_json(const Json& j) {
    return guarded("decoder", [&] {
        SoftmaxDecoder d{matrix_from(j.at("weights"), "decoder weights"), vector_from(j.at("biases"), "decoder biases")};
        d.validate();
        return d;
    });
}

Json model_to_json(const StochasticEncoder& enc, const SoftmaxDecoder& dec) {
    return Json{{"format", "ibgap-model"}, {"version", kModelFormatVersion}, {"encoder", to_json(enc)},
                {"decoder", to_json(dec)}};
}

std::pair<StochasticEncoder, SoftmaxDecoder> model_from_json(const Json& j) {
    return guarded("model", [&] {
        if (j.value("format", std::string()) != "ibgap-model") throw FormatError("model: not an ibgap model document");
        if (j.at("version").get<int>() != kModelFormatVersion)
            throw FormatError("model: unsupported version " + j.at("version").dump());
        auto enc = encoder_from_json(j.at("encoder"));
        auto dec = decoder_from_json(j.at("decoder"));
        if (dec.code_size() != code_size(enc)) throw FormatError("model: decoder does not match encoder code size");
        return std::pair{std::move(enc), std::move(dec)};
    });
}

Json to_json(const MiEstimate& mi) {
    return Json{{"per_unit_kl", vector_json(mi.per_unit_kl)},
                {"total_kl", json_number(mi.total_kl)},
                {"sqrt_bound", json_number(mi.sqrt_bound)}};
}

Json to_json(const GapEstimate& gap) {
    Json gaps = Json::array();
    for (double g : gap.mini_test_gaps) gaps.push_back(json_number(g));
    return Json{{"quantile_level", gap.quantile_level},
                {"quantile_value", json_number(gap.quantile_value)},
                {"reference_risk", json_number(gap.reference_risk)},
                {"mini_test_size", gap.mini_test_size},
                {"mini_tests", gap.mini_test_gaps.size()},
                {"mini_test_gaps", std::move(gaps)}};
}

Json to_json(const QuantizationReport& r) {
    return Json{{"K", r.requested_k},
                {"cells", r.k},
                {"epsilon_hat", json_number(r.epsilon_hat)},
                {"r_hat", json_number(r.r_hat)},
                {"objective", json_number(r.objective)}};
}

Json to_json(const DeltaConstants& c) {
    return Json{{"delta", c.delta},
                {"y_card", c.y_card},
                {"log_vol_u", json_number(c.log_vol_u)},
                {"vol_u", json_number(c.vol_u)},
                {"p_y_min", c.p_y_min},
                {"eta", c.eta},
                {"a_delta", json_number(c.a_delta)},
                {"b_delta", json_number(c.b_delta)},
                {"c_delta", json_number(c.c_delta)},
                {"d_delta", json_number(c.d_delta)}};
}

Json to_json(const BoundReport& r) {
    Json sweep = Json::array();
    for (const auto& q : r.sweep) sweep.push_back(to_json(q));
    return Json{{"total", json_number(r.total)},
                {"quantization_term", json_number(r.quantization_term)},
                {"mi_term", json_number(r.mi_term)},
                {"hellinger_term", json_number(r.hellinger_term)},
                {"constant_term", json_number(r.constant_term)},
                {"chosen_k", r.chosen_k},
                {"n", r.n},
                {"delta", r.delta},
                {"hellinger", json_number(r.hellinger_value)},
                {"mi_total_kl", json_number(r.mi_value)},
                {"remainder_note", r.remainder_note},
                {"grid_min", r.grid_min},
                {"constants", to_json(r.constants)},
                {"k_sweep", std::move(sweep)}};
}

Json to_json(const ModelSettings& s) {
    return Json{{"family", to_string(s.family)},
                {"hidden", s.hidden},
                {"code", s.code},
                {"epochs", s.epochs},
                {"batch_size", s.batch_size},
                {"learning_rate", s.learning_rate},
                {"momentum", s.momentum},
                {"train_samples", s.train_samples},
                {"curve_samples", s.curve_samples},
                {"rbm_learning_rate", s.rbm_learning_rate},
                {"rbm_initial_momentum", s.rbm_initial_momentum},
                {"rbm_final_momentum", s.rbm_final_momentum},
                {"rbm_momentum_switch", s.rbm_momentum_switch},
                {"decoder_epochs", s.decoder_epochs},
                {"decoder_learning_rate", s.decoder_learning_rate}};
}

ModelSettings model_settings_from_json(const Json& j, ModelSettings s) {
    return guarded("model settings", [&] {
        if (j.contains("family")) s.family = family_from_string(j.at("family").get<std::string>());
        s.hidden = j.value("hidden", s.hidden);
        s.code = j.value("code", s.code);
        s.epochs = j.value("epochs", s.epochs);
        s.batch_size = j.value("batch_size", s.batch_size);
        s.learning_rate = j.value("learning_rate", s.learning_rate);
        s.momentum = j.value("momentum", s.momentum);
        s.train_samples = j.value("train_samples", s.train_samples);
        s.curve_samples = j.value("curve_samples", s.curve_samples);
        s.rbm_learning_rate = j.value("rbm_learning_rate", s.rbm_learning_rate);
        s.rbm_initial_momentum = j.value("rbm_initial_momentum", s.rbm_initial_momentum);
        s.rbm_final_momentum = j.value("rbm_final_momentum", s.rbm_final_momentum);
        s.rbm_momentum_switch = j.value("rbm_momentum_switch", s.rbm_momentum_switch);
        s.decoder_epochs = j.value("decoder_epochs", s.decoder_epochs);
        s.decoder_learning_rate = j.value("decoder_learning_rate", s.decoder_learning_rate);
        s.validate();
        return s;
    });
}

Json read_json(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open " + path.string());
    try {
        return Json::parse(in);
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(path.string() + ": " + e.what());
    }
}

void write_text(const std::filesystem::path& path, const std::string& text) {
    if (path.has_parent_path()) {
        std::error_code ec;
        std::filesystem::create_directories(path.parent_path(), ec);
    }
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ConfigError("cannot write " + path.string());
    out << text;
    if (!out) throw ConfigError("I/O error writing " + path.string());
}

} // namespace ibgap
