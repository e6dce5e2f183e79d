#pragma once

#include <cstdint>
#include <string>

#include "bytevq/numerics.hpp"
#include "json.hpp"

namespace bytevq::detail {

// All bundle files share one layout: a JSON document with a "format" tag, a
// "version" number and a trailing "checksum" over the rest of the document.
// Numeric payloads are rounded to IEEE-754 single precision before writing.

inline double to_single(double v) { return static_cast<double>(static_cast<float>(v)); }

uint64_t fnv1a(const std::string& s);

nlohmann::json matrix_to_json(const DenseMatrix& m);
DenseMatrix matrix_from_json(const nlohmann::json& j);

// Values plus optimizer moments and the step counter.
nlohmann::json params_to_json(const ParamStore& params);
void params_from_json(const nlohmann::json& j, ParamStore& params);

nlohmann::json optimizer_to_json(const OptimizerConfig& opt);
OptimizerConfig optimizer_from_json(const nlohmann::json& j);

// Adds the checksum and writes the document. `body` must not already have a
// "checksum" key.
void write_bundle(nlohmann::json body, const std::string& path);

// Parses, verifies the checksum, and checks format tag and version.
// Throws DataError on any mismatch or unreadable file.
nlohmann::json read_bundle(const std::string& path, const std::string& format,
                           int expected_version);

}  // namespace bytevq::detail
