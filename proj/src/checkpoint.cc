#include "nbslu/checkpoint.h"

#include <bit>
#include <cstring>
#include <fstream>
#include <stdexcept>

namespace nbslu {
namespace {

using nlohmann::json;
using nlohmann::ordered_json;

constexpr const char* kFormat = "nbslu-checkpoint-1";

void put_le(std::ostream& out, double v) {
  const auto bits = std::bit_cast<uint64_t>(v);
  char buf[8];
  for (int i = 0; i < 8; ++i) buf[i] = static_cast<char>((bits >> (8 * i)) & 0xff);
  out.write(buf, 8);
}

double get_le(const unsigned char* p) {
  uint64_t bits = 0;
  for (int i = 0; i < 8; ++i) bits |= static_cast<uint64_t>(p[i]) << (8 * i);
  return std::bit_cast<double>(bits);
}

void write_atomically(const std::filesystem::path& path, const std::string& text) {
  const auto tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + tmp);
    out << text;
    if (!out) throw std::runtime_error("write failed for " + tmp);
  }
  std::filesystem::rename(tmp, path);
}

}  // namespace

ordered_json to_json(const LabelSpace& labels) {
  ordered_json pairs = ordered_json::array();
  for (size_t k = 0; k < labels.num_pairs(); ++k)
    pairs.push_back({{"act", labels.pairs()[k].first}, {"slot", labels.pairs()[k].second}, {"values", labels.values(k)}});
  return {{"pairs", pairs}};
}

LabelSpace label_space_from_json(const json& j) {
  std::vector<ActSlot> pairs;
  std::vector<std::vector<std::string>> values;
  for (const auto& p : j.at("pairs")) {
    pairs.emplace_back(p.at("act").get<std::string>(), p.at("slot").get<std::string>());
    values.push_back(p.at("values").get<std::vector<std::string>>());
  }
  return LabelSpace(std::move(pairs), std::move(values));
}

void save_checkpoint(const std::filesystem::path& dir, const SluModel& model, const Vocabulary& vocab,
                     const LabelSpace& labels, const RunConfig& config, const json& provenance) {
  std::filesystem::create_directories(dir);
  if (vocab.size() != model.config.vocab_size) throw std::invalid_argument("vocabulary size differs from model config");

  ordered_json table = ordered_json::array();
  const auto payload = dir / "params.bin";
  {
    std::ofstream out(payload.string() + ".tmp", std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + payload.string());
    size_t offset = 0;
    for (const auto& t : tensors(const_cast<SluModel&>(model))) {
      table.push_back({{"name", t.name}, {"rows", t.tensor->rows}, {"cols", t.tensor->cols}, {"offset", offset}});
      for (double v : t.tensor->data) put_le(out, v);
      offset += t.tensor->size() * 8;
    }
    if (!out) throw std::runtime_error("write failed for " + payload.string());
  }
  std::filesystem::rename(payload.string() + ".tmp", payload);
  vocab.save(dir / "vocab.tsv");

  ordered_json manifest;
  manifest["format"] = kFormat;
  manifest["encoder"] = to_json(model.config);
  manifest["run_config"] = to_json(config);
  manifest["labels"] = to_json(labels);
  manifest["vocab"] = "vocab.tsv";
  manifest["payload"] = "params.bin";
  manifest["tensors"] = table;
  manifest["provenance"] = provenance.is_null() ? json::object() : provenance;
  write_atomically(dir / "manifest.json", manifest.dump(2) + "\n");
}

Checkpoint load_checkpoint(const std::filesystem::path& dir) {
  const json manifest = read_json(dir / "manifest.json");
  if (manifest.value("format", std::string()) != kFormat)
    throw std::runtime_error(dir.string() + ": not a checkpoint (format tag missing or unknown)");

  Checkpoint ck;
  apply_json(manifest.at("encoder"), ck.model.config);
  ck.model.config.validate();
  ck.config = run_config_from_json(manifest.at("run_config"));
  ck.labels = label_space_from_json(manifest.at("labels"));
  ck.vocab = Vocabulary::load(dir / manifest.at("vocab").get<std::string>());
  ck.provenance = manifest.value("provenance", json::object());
  if (ck.vocab.size() != ck.model.config.vocab_size)
    throw std::runtime_error(dir.string() + ": vocabulary has " + std::to_string(ck.vocab.size()) +
                             " entries but the encoder expects " + std::to_string(ck.model.config.vocab_size));

  ck.model.encoder = EncoderParams::zeros(ck.model.config);
  ck.model.head = StcParams::zeros(ck.labels, ck.model.config.d_model);

  const auto payload_path = dir / manifest.at("payload").get<std::string>();
  std::ifstream in(payload_path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + payload_path.string());
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());

  auto refs = tensors(ck.model);
  const auto& table = manifest.at("tensors");
  if (table.size() != refs.size())
    throw std::runtime_error(dir.string() + ": manifest lists " + std::to_string(table.size()) + " tensors, expected " +
                             std::to_string(refs.size()));
  for (size_t i = 0; i < refs.size(); ++i) {
    const auto& e = table[i];
    Matrix& m = *refs[i].tensor;
    if (e.at("name").get<std::string>() != refs[i].name || e.at("rows").get<size_t>() != m.rows ||
        e.at("cols").get<size_t>() != m.cols) {
      throw std::runtime_error(dir.string() + ": tensor " + e.at("name").get<std::string>() + " (" +
                               std::to_string(e.at("rows").get<size_t>()) + "x" +
                               std::to_string(e.at("cols").get<size_t>()) + ") does not match " + refs[i].name +
                               " (" + std::to_string(m.rows) + "x" + std::to_string(m.cols) + ")");
    }
    const size_t offset = e.at("offset").get<size_t>();
    if (offset + m.size() * 8 > bytes.size()) throw std::runtime_error(payload_path.string() + ": truncated payload");
    for (size_t j = 0; j < m.size(); ++j) m.data[j] = get_le(bytes.data() + offset + 8 * j);
  }
  return ck;
}

}  // namespace nbslu
