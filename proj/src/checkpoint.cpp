#include "relrank/checkpoint.hpp"

#include <bit>
#include <fstream>
#include <map>

#include <fmt/core.h>

#include "json.hpp"

namespace relrank {

static_assert(std::endian::native == std::endian::little,
              "checkpoint I/O assumes a little-endian host");

namespace {
constexpr const char* kFormat = "relrank-checkpoint";
constexpr int kVersion = 1;
}  // namespace

void save_checkpoint(const std::filesystem::path& path, const SemanticModel& model,
                     const std::string& vocab_digest) {
  validate_model(model);
  nlohmann::json header = {{"format", kFormat},
                           {"version", kVersion},
                           {"kind", to_string(model.kind)},
                           {"rank", model.rank},
                           {"hidden_dim", model.hidden_dim},
                           {"num_entities", model.num_entities},
                           {"num_relations", model.num_relations},
                           {"seed", model.seed},
                           {"vocab_digest", vocab_digest},
                           {"encoding", "float64-le"}};
  auto blocks = nlohmann::json::array();
  model.params.for_each_block([&](std::string_view name, const Matrix& m) {
    blocks.push_back({{"name", name}, {"rows", m.rows}, {"cols", m.cols}});
  });
  header["blocks"] = blocks;

  std::ofstream out(path, std::ios::binary);
  if (!out) throw ValidationError(fmt::format("cannot write checkpoint {}", path.string()));
  out << header.dump() << '\n';
  model.params.for_each_block([&](std::string_view, const Matrix& m) {
    out.write(reinterpret_cast<const char*>(m.data.data()),
              static_cast<std::streamsize>(m.data.size() * sizeof(double)));
  });
  if (!out) throw std::runtime_error(fmt::format("write failed for {}", path.string()));
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError(fmt::format("cannot open checkpoint {}", path.string()));
  std::string line;
  if (!std::getline(in, line)) {
    throw ValidationError(fmt::format("{}: empty checkpoint", path.string()));
  }
  Checkpoint ckpt;
  auto& m = ckpt.model;
  std::map<std::string, std::pair<std::size_t, std::size_t>> shapes;
  try {
    const auto header = nlohmann::json::parse(line);
    if (header.at("format") != kFormat || header.at("version") != kVersion) {
      throw ValidationError("unsupported checkpoint format");
    }
    m.kind = parse_model_kind(header.at("kind").get<std::string>());
    m.rank = header.at("rank").get<std::size_t>();
    m.hidden_dim = header.at("hidden_dim").get<std::size_t>();
    m.num_entities = header.at("num_entities").get<std::size_t>();
    m.num_relations = header.at("num_relations").get<std::size_t>();
    m.seed = header.at("seed").get<std::uint64_t>();
    ckpt.vocab_digest = header.value("vocab_digest", "");
    for (const auto& b : header.at("blocks")) {
      shapes[b.at("name").get<std::string>()] = {b.at("rows").get<std::size_t>(),
                                                 b.at("cols").get<std::size_t>()};
    }
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(fmt::format("{}: malformed checkpoint header: {}", path.string(),
                                      e.what()));
  }

  // Rebuild the layout for the kind, then fill blocks in order.
  const auto layout = init_model(m.kind, m.num_entities, m.num_relations, m.rank,
                                 m.hidden_dim, 0);
  m.params = layout.params.zeros_like();
  std::size_t seen = 0;
  m.params.for_each_block([&](std::string_view name, Matrix& block) {
    auto it = shapes.find(std::string(name));
    if (it == shapes.end() || it->second != std::pair{block.rows, block.cols}) {
      throw ValidationError(fmt::format("{}: block {} missing or misshapen", path.string(), name));
    }
    ++seen;
    in.read(reinterpret_cast<char*>(block.data.data()),
            static_cast<std::streamsize>(block.data.size() * sizeof(double)));
    if (!in) throw ValidationError(fmt::format("{}: truncated block {}", path.string(), name));
  });
  if (seen != shapes.size()) {
    throw ValidationError(fmt::format("{}: unexpected parameter blocks", path.string()));
  }
  validate_model(m);
  return ckpt;
}

}  // namespace relrank
