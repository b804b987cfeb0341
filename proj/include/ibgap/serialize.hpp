#ifndef IBGAP_SERIALIZE_HPP
#define IBGAP_SERIALIZE_HPP

#include "ibgap/bound.hpp"
#include "ibgap/training.hpp"

#include <json.hpp>

#include <filesystem>
#include <string>

namespace ibgap {

using Json = nlohmann::ordered_json;

inline constexpr int kModelFormatVersion = 1;

Json to_json(const DenseLayer& layer);
DenseLayer layer_from_json(const Json& j);

Json to_json(const StochasticEncoder& enc);
StochasticEncoder encoder_from_json(const Json& j);

Json to_json(const SoftmaxDecoder& dec);
SoftmaxDecoder decoder_from_json(const Json& j);

/// Versioned document holding an encoder and its decoder.
Json model_to_json(const StochasticEncoder& enc, const SoftmaxDecoder& dec);
std::pair<StochasticEncoder, SoftmaxDecoder> model_from_json(const Json& j);

Json to_json(const MiEstimate& mi);
Json to_json(const GapEstimate& gap);
Json to_json(const QuantizationReport& r);
Json to_json(const DeltaConstants& c);
Json to_json(const BoundReport& r);

Json to_json(const ModelSettings& s);
ModelSettings model_settings_from_json(const Json& j, ModelSettings defaults = {});

/// Shortest decimal that round-trips; "inf", "-inf" and "nan" for non-finite values.
std::string format_double(double v);

/// Finite doubles as numbers, non-finite ones as the strings above.
Json json_number(double v);

Json read_json(const std::filesystem::path& path);
void write_text(const std::filesystem::path& path, const std::string& text);

} // namespace ibgap

#endif // IBGAP_SERIALIZE_HPP
