#include "bytevq/codec.hpp"

#include <fstream>
#include <sstream>

#include "bytevq/utf8.hpp"
#include "store_io.hpp"

namespace bytevq {

namespace detail {

uint64_t fnv1a(const std::string& s) {
  uint64_t h = 1469598103934665603ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

nlohmann::json matrix_to_json(const DenseMatrix& m) {
  nlohmann::json j;
  j["rows"] = m.rows;
  j["cols"] = m.cols;
  nlohmann::json data = nlohmann::json::array();
  for (double v : m.data) data.push_back(to_single(v));
  j["data"] = std::move(data);
  return j;
}

DenseMatrix matrix_from_json(const nlohmann::json& j) {
  DenseMatrix m(j.at("rows").get<int>(), j.at("cols").get<int>());
  const auto& data = j.at("data");
  if (static_cast<int>(data.size()) != m.size()) {
    throw DataError("matrix block: data length does not match rows x cols");
  }
  for (int i = 0; i < m.size(); ++i) m.data[i] = data[i].get<double>();
  return m;
}

nlohmann::json params_to_json(const ParamStore& params) {
  nlohmann::json j;
  j["step"] = params.step();
  nlohmann::json tensors;
  params.for_each([&](const Tensor& t) {
    nlohmann::json entry = matrix_to_json(t.value);
    entry["m1"] = matrix_to_json(t.moment1)["data"];
    entry["m2"] = matrix_to_json(t.moment2)["data"];
    tensors[t.name] = std::move(entry);
  });
  j["tensors"] = std::move(tensors);
  return j;
}

void params_from_json(const nlohmann::json& j, ParamStore& params) {
  params.set_step(j.at("step").get<long>());
  for (const auto& [name, entry] : j.at("tensors").items()) {
    Tensor& t = params.create(name, entry.at("rows").get<int>(), entry.at("cols").get<int>());
    t.value = matrix_from_json(entry);
    const auto& m1 = entry.at("m1");
    const auto& m2 = entry.at("m2");
    if (static_cast<int>(m1.size()) != t.value.size() ||
        static_cast<int>(m2.size()) != t.value.size()) {
      throw DataError("checkpoint tensor " + name + ": moment length mismatch");
    }
    for (int i = 0; i < t.value.size(); ++i) {
      t.moment1.data[i] = m1[i].get<double>();
      t.moment2.data[i] = m2[i].get<double>();
    }
  }
}

nlohmann::json optimizer_to_json(const OptimizerConfig& opt) {
  return {{"kind", opt.kind == OptimizerConfig::Kind::kAdam ? "adam" : "sgd"},
          {"learning_rate", to_single(opt.learning_rate)},
          {"beta1", to_single(opt.beta1)},
          {"beta2", to_single(opt.beta2)},
          {"epsilon", to_single(opt.epsilon)}};
}

OptimizerConfig optimizer_from_json(const nlohmann::json& j) {
  OptimizerConfig opt;
  std::string kind = j.at("kind").get<std::string>();
  if (kind == "adam") {
    opt.kind = OptimizerConfig::Kind::kAdam;
  } else if (kind == "sgd") {
    opt.kind = OptimizerConfig::Kind::kSgd;
  } else {
    throw DataError("unknown optimizer kind '" + kind + "'");
  }
  opt.learning_rate = j.at("learning_rate").get<double>();
  opt.beta1 = j.at("beta1").get<double>();
  opt.beta2 = j.at("beta2").get<double>();
  opt.epsilon = j.at("epsilon").get<double>();
  return opt;
}

void write_bundle(nlohmann::json body, const std::string& path) {
  const std::string payload = body.dump();
  std::ostringstream sum;
  sum << std::hex << fnv1a(payload);
  body["checksum"] = sum.str();
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path);
  out << body.dump(1) << "\n";
  if (!out) throw DataError("write failed for " + path);
}

nlohmann::json read_bundle(const std::string& path, const std::string& format,
                           int expected_version) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot read " + path);
  nlohmann::json body;
  try {
    in >> body;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(path + ": not a valid bundle (" + e.what() + ")");
  }
  if (!body.contains("checksum")) throw DataError(path + ": missing checksum");
  const std::string stored = body["checksum"].get<std::string>();
  body.erase("checksum");
  std::ostringstream sum;
  sum << std::hex << fnv1a(body.dump());
  if (sum.str() != stored) throw DataError(path + ": checksum mismatch, file is corrupted");
  if (body.value("format", "") != format) {
    throw DataError(path + ": unexpected format tag '" + body.value("format", "") +
                    "', wanted '" + format + "'");
  }
  const int version = body.value("version", -1);
  if (version != expected_version) {
    throw DataError(path + ": format version " + std::to_string(version) +
                    " is not supported (this build reads version " +
                    std::to_string(expected_version) + ")");
  }
  return body;
}

}  // namespace detail

using detail::matrix_from_json;
using detail::matrix_to_json;
using detail::to_single;

int CodecArtifact::token_of(uint32_t cp) const {
  for (size_t i = 0; i < charset.size(); ++i) {
    if (charset[i] == cp) return static_cast<int>(i);
  }
  return -1;
}

TokenEncoderView CodecArtifact::encoder_view() const {
  TokenEncoderView v;
  v.embed = &embed;
  v.layers.resize(conv.size());
  for (size_t l = 0; l < conv.size(); ++l) {
    v.layers[l].tap[0] = &conv[l].tap0;
    v.layers[l].tap[1] = &conv[l].tap1;
    v.layers[l].tap[2] = &conv[l].tap2;
    v.layers[l].bias = &conv[l].bias;
  }
  return v;
}

LinearView CodecArtifact::decoder_view() const { return {&dec_w, &dec_b}; }

RvqView CodecArtifact::codec_view() const {
  RvqView v;
  v.beta = beta;
  for (const DenseMatrix& b : books) v.books.push_back(&b);
  return v;
}

namespace {

DenseMatrix rounded(const DenseMatrix& m) {
  DenseMatrix out = m;
  for (double& v : out.data) v = to_single(v);
  return out;
}

}  // namespace

CodecArtifact make_artifact(const AutoEncoderModel& model, const std::vector<uint32_t>& charset,
                            const std::string& corpus_hash) {
  const AutoEncoderConfig& cfg = model.config;
  if (static_cast<int>(charset.size()) != cfg.charset_size) {
    throw InputError("make_artifact: charset size does not match the model");
  }
  CodecArtifact a;
  a.charset = charset;
  a.levels = cfg.levels;
  a.codes_per_level = cfg.codes_per_level;
  a.dim = cfg.dim;
  a.beta = cfg.beta;
  a.encoder_layers = cfg.encoder_layers;
  a.seed = cfg.seed;
  a.corpus_hash = corpus_hash;
  a.embed = rounded(model.params.at("enc.embed").value);
  for (int l = 0; l < cfg.encoder_layers; ++l) {
    const std::string base = "enc.conv" + std::to_string(l);
    CodecArtifact::ConvLayer layer;
    layer.tap0 = rounded(model.params.at(base + ".tap0").value);
    layer.tap1 = rounded(model.params.at(base + ".tap1").value);
    layer.tap2 = rounded(model.params.at(base + ".tap2").value);
    layer.bias = rounded(model.params.at(base + ".bias").value);
    a.conv.push_back(std::move(layer));
  }
  a.dec_w = rounded(model.params.at("dec.w").value);
  a.dec_b = rounded(model.params.at("dec.b").value);
  for (int k = 0; k < cfg.levels; ++k) {
    a.books.push_back(rounded(model.params.at("vq.book" + std::to_string(k)).value));
  }
  return a;
}

void save_artifact(const CodecArtifact& artifact, const std::string& path) {
  nlohmann::json body;
  body["format"] = "bytevq-codec";
  body["version"] = artifact.version;
  body["charset"] = artifact.charset;
  body["levels"] = artifact.levels;
  body["codes_per_level"] = artifact.codes_per_level;
  body["dim"] = artifact.dim;
  body["beta"] = to_single(artifact.beta);
  body["encoder_layers"] = artifact.encoder_layers;
  body["provenance"] = {{"seed", artifact.seed}, {"corpus_hash", artifact.corpus_hash}};
  nlohmann::json weights;
  weights["embed"] = matrix_to_json(artifact.embed);
  for (size_t l = 0; l < artifact.conv.size(); ++l) {
    const std::string base = "conv" + std::to_string(l);
    weights[base + ".tap0"] = matrix_to_json(artifact.conv[l].tap0);
    weights[base + ".tap1"] = matrix_to_json(artifact.conv[l].tap1);
    weights[base + ".tap2"] = matrix_to_json(artifact.conv[l].tap2);
    weights[base + ".bias"] = matrix_to_json(artifact.conv[l].bias);
  }
  weights["dec.w"] = matrix_to_json(artifact.dec_w);
  weights["dec.b"] = matrix_to_json(artifact.dec_b);
  for (size_t k = 0; k < artifact.books.size(); ++k) {
    weights["book" + std::to_string(k)] = matrix_to_json(artifact.books[k]);
  }
  body["weights"] = std::move(weights);
  detail::write_bundle(std::move(body), path);
}

CodecArtifact load_artifact(const std::string& path) {
  nlohmann::json body = detail::read_bundle(path, "bytevq-codec", kArtifactVersion);
  CodecArtifact a;
  a.version = body.at("version").get<int>();
  a.charset = body.at("charset").get<std::vector<uint32_t>>();
  a.levels = body.at("levels").get<int>();
  a.codes_per_level = body.at("codes_per_level").get<int>();
  a.dim = body.at("dim").get<int>();
  a.beta = body.at("beta").get<double>();
  a.encoder_layers = body.at("encoder_layers").get<int>();
  a.seed = body.at("provenance").at("seed").get<uint64_t>();
  a.corpus_hash = body.at("provenance").at("corpus_hash").get<std::string>();
  const auto& weights = body.at("weights");
  a.embed = matrix_from_json(weights.at("embed"));
  for (int l = 0; l < a.encoder_layers; ++l) {
    const std::string base = "conv" + std::to_string(l);
    CodecArtifact::ConvLayer layer;
    layer.tap0 = matrix_from_json(weights.at(base + ".tap0"));
    layer.tap1 = matrix_from_json(weights.at(base + ".tap1"));
    layer.tap2 = matrix_from_json(weights.at(base + ".tap2"));
    layer.bias = matrix_from_json(weights.at(base + ".bias"));
    a.conv.push_back(std::move(layer));
  }
  a.dec_w = matrix_from_json(weights.at("dec.w"));
  a.dec_b = matrix_from_json(weights.at("dec.b"));
  for (int k = 0; k < a.levels; ++k) {
    a.books.push_back(matrix_from_json(weights.at("book" + std::to_string(k))));
  }
  if (static_cast<int>(a.charset.size()) != a.embed.rows || a.embed.cols != a.dim) {
    throw DataError(path + ": weight shapes do not match the header");
  }
  return a;
}

std::vector<int> text_to_bytes(const CodecArtifact& artifact,
                               const std::vector<uint32_t>& text) {
  std::vector<int> tokens;
  tokens.reserve(text.size());
  for (size_t i = 0; i < text.size(); ++i) {
    const int tok = artifact.token_of(text[i]);
    if (tok < 0) {
      throw InputError("text_to_bytes: character '" +
                       codepoints_to_string({text[i]}) + "' (U+" +
                       [&] {
                         std::ostringstream os;
                         os << std::hex << std::uppercase << text[i];
                         return os.str();
                       }() +
                       ") at position " + std::to_string(i) + " is not in the charset");
    }
    tokens.push_back(tok);
  }
  if (tokens.empty()) return {};
  DenseMatrix z = token_encoder_forward(artifact.encoder_view(), tokens, nullptr);
  const RvqView codec = artifact.codec_view();
  std::vector<int> stream;
  stream.reserve(tokens.size() * artifact.levels);
  for (int i = 0; i < z.rows; ++i) {
    QuantizeResult q = rvq_quantize(std::span(z.row(i), z.cols), codec);
    for (const LatentSymbol& s : q.symbols) {
      stream.push_back(symbol_id(s, artifact.codes_per_level));
    }
  }
  return stream;
}

namespace {

int decode_accumulated(const CodecArtifact& artifact, const std::vector<double>& v) {
  const DenseMatrix& w = artifact.dec_w;
  int best = 0;
  double best_score = 0.0;
  for (int c = 0; c < w.cols; ++c) {
    double score = artifact.dec_b.at(0, c);
    for (int j = 0; j < w.rows; ++j) score += v[j] * w.at(j, c);
    if (c == 0 || score > best_score) {
      best = c;
      best_score = score;
    }
  }
  return best;
}

void check_stream(const CodecArtifact& artifact, const std::vector<int>& stream) {
  for (int id : stream) {
    if (id < 0 || id >= artifact.symbol_count()) {
      throw InputError("stream symbol " + std::to_string(id) + " outside [0, " +
                       std::to_string(artifact.symbol_count()) + ")");
    }
  }
}

}  // namespace

std::vector<uint32_t> bytes_to_labels(const CodecArtifact& artifact,
                                      const std::vector<int>& stream) {
  check_stream(artifact, stream);
  if (stream.empty()) return {};
  const int m = artifact.codes_per_level;
  std::vector<uint32_t> out;
  std::vector<double> v(artifact.dim, 0.0);
  int k = -1;
  for (int id : stream) {
    const int j = id / m;
    const double* e = artifact.books[j].row(id % m);
    if (k == -1 || k < j) {
      for (int d = 0; d < artifact.dim; ++d) v[d] += e[d];
    } else {
      out.push_back(artifact.charset[decode_accumulated(artifact, v)]);
      for (int d = 0; d < artifact.dim; ++d) v[d] = e[d];
    }
    k = j;
  }
  out.push_back(artifact.charset[decode_accumulated(artifact, v)]);
  return out;
}

std::vector<uint32_t> bytes_to_labels_positional(const CodecArtifact& artifact,
                                                 const std::vector<int>& stream) {
  check_stream(artifact, stream);
  const int m = artifact.codes_per_level;
  std::vector<uint32_t> out;
  std::vector<double> v(artifact.dim, 0.0);
  for (size_t i = 0; i < stream.size(); ++i) {
    const int id = stream[i];
    const double* e = artifact.books[id / m].row(id % m);
    for (int d = 0; d < artifact.dim; ++d) v[d] += e[d];
    if ((i + 1) % artifact.levels == 0 || i + 1 == stream.size()) {
      out.push_back(artifact.charset[decode_accumulated(artifact, v)]);
      std::fill(v.begin(), v.end(), 0.0);
    }
  }
  return out;
}

int collision_count(const CodecArtifact& artifact) {
  std::vector<std::vector<int>> seen;
  int collisions = 0;
  for (uint32_t cp : artifact.charset) {
    std::vector<int> stream = text_to_bytes(artifact, {cp});
    bool dup = false;
    for (const auto& s : seen) {
      if (s == stream) {
        dup = true;
        break;
      }
    }
    if (dup) collisions += 1;
    else seen.push_back(std::move(stream));
  }
  return collisions;
}

double round_trip_accuracy(const CodecArtifact& artifact,
                           const std::vector<std::vector<uint32_t>>& lines) {
  long total = 0;
  long correct = 0;
  for (const auto& line : lines) {
    const std::vector<uint32_t> decoded = bytes_to_labels(artifact, text_to_bytes(artifact, line));
    total += static_cast<long>(line.size());
    for (size_t i = 0; i < line.size() && i < decoded.size(); ++i) {
      if (decoded[i] == line[i]) correct += 1;
    }
  }
  return total == 0 ? 1.0 : static_cast<double>(correct) / static_cast<double>(total);
}

void save_checkpoint(const AutoEncoderModel& model, const std::vector<uint32_t>& charset,
                     const std::string& path) {
  const AutoEncoderConfig& c = model.config;
  nlohmann::json body;
  body["format"] = "bytevq-checkpoint";
  body["version"] = kArtifactVersion;
  body["charset"] = charset;
  body["config"] = {{"charset_size", c.charset_size},
                    {"dim", c.dim},
                    {"encoder_layers", c.encoder_layers},
                    {"levels", c.levels},
                    {"codes_per_level", c.codes_per_level},
                    {"beta", to_single(c.beta)},
                    {"feature_dim", c.feature_dim},
                    {"context", c.context},
                    {"hidden", c.hidden},
                    {"w_label", to_single(c.w_label)},
                    {"w_acoustic", to_single(c.w_acoustic)},
                    {"w_ctc", to_single(c.w_ctc)},
                    {"w_vq", to_single(c.w_vq)},
                    {"epochs", c.epochs},
                    {"batch_size", c.batch_size},
                    {"seed", c.seed},
                    {"optimizer", detail::optimizer_to_json(c.optimizer)}};
  body["params"] = detail::params_to_json(model.params);
  detail::write_bundle(std::move(body), path);
}

AutoEncoderModel load_checkpoint(const std::string& path, std::vector<uint32_t>* charset) {
  nlohmann::json body = detail::read_bundle(path, "bytevq-checkpoint", kArtifactVersion);
  if (charset) *charset = body.at("charset").get<std::vector<uint32_t>>();
  const auto& c = body.at("config");
  AutoEncoderModel model;
  model.config.charset_size = c.at("charset_size").get<int>();
  model.config.dim = c.at("dim").get<int>();
  model.config.encoder_layers = c.at("encoder_layers").get<int>();
  model.config.levels = c.at("levels").get<int>();
  model.config.codes_per_level = c.at("codes_per_level").get<int>();
  model.config.beta = c.at("beta").get<double>();
  model.config.feature_dim = c.at("feature_dim").get<int>();
  model.config.context = c.at("context").get<int>();
  model.config.hidden = c.at("hidden").get<int>();
  model.config.w_label = c.at("w_label").get<double>();
  model.config.w_acoustic = c.at("w_acoustic").get<double>();
  model.config.w_ctc = c.at("w_ctc").get<double>();
  model.config.w_vq = c.at("w_vq").get<double>();
  model.config.epochs = c.at("epochs").get<int>();
  model.config.batch_size = c.at("batch_size").get<int>();
  model.config.seed = c.at("seed").get<uint64_t>();
  model.config.optimizer = detail::optimizer_from_json(c.at("optimizer"));
  detail::params_from_json(body.at("params"), model.params);
  return model;
}

void save_streams(const std::vector<std::vector<int>>& streams, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path);
  for (const auto& stream : streams) {
    for (size_t i = 0; i < stream.size(); ++i) {
      if (i) out << ' ';
      out << stream[i];
    }
    out << '\n';
  }
  if (!out) throw DataError("write failed for " + path);
}

std::vector<std::vector<int>> load_streams(const std::string& path, int max_id) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot read " + path);
  std::vector<std::vector<int>> streams;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    line_no += 1;
    std::vector<int> stream;
    std::istringstream ss(line);
    std::string token;
    while (ss >> token) {
      int id = 0;
      try {
        size_t used = 0;
        id = std::stoi(token, &used);
        if (used != token.size()) throw std::invalid_argument(token);
      } catch (const std::exception&) {
        throw DataError(path + ":" + std::to_string(line_no) + ": '" + token +
                        "' is not a symbol id");
      }
      if (id < 0 || id >= max_id) {
        throw DataError(path + ":" + std::to_string(line_no) + ": symbol id " +
                        std::to_string(id) + " outside [0, " + std::to_string(max_id) + ")");
      }
      stream.push_back(id);
    }
    streams.push_back(std::move(stream));
  }
  return streams;
}

uint64_t hash_lines(const std::vector<std::vector<uint32_t>>& lines) {
  std::string text;
  for (const auto& line : lines) {
    text += codepoints_to_string(line);
    text += '\n';
  }
  return detail::fnv1a(text);
}

}  // namespace bytevq
