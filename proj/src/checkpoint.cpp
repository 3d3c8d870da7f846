// Checkpoint container: one line of JSON header
//   {"format":"plume-ckpt-v1","format_version":1,"config":{..},"train_meta":{..},"tensor_count":K}
// terminated by '\n', followed by K tensor records
//   u32 name_len | name bytes | u32 rank | u64 dims[rank] | f32 data[prod(dims)]
// all little-endian.

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <string>

#include <nlohmann/json.hpp>

#include "plume/errors.hpp"
#include "plume/training.hpp"

static_assert(std::endian::native == std::endian::little,
              "checkpoint I/O writes host byte order and assumes it is little-endian");

namespace plume {

namespace {

constexpr const char* kFormatPrefix = "plume-ckpt-v";

nlohmann::json config_to_json(const ModelConfig& c) {
  return {{"d", c.d},
          {"n_layers", c.n_layers},
          {"alpha", c.alpha},
          {"tau", c.gs.tau},
          {"sinkhorn_iters", c.gs.iters},
          {"gamma", c.gs.gamma}};
}

ModelConfig config_from_json(const nlohmann::json& j) {
  ModelConfig c;
  c.d = j.at("d").get<std::size_t>();
  c.n_layers = j.at("n_layers").get<std::size_t>();
  c.alpha = j.at("alpha").get<double>();
  c.gs.tau = j.at("tau").get<double>();
  c.gs.iters = j.at("sinkhorn_iters").get<int>();
  c.gs.gamma = j.at("gamma").get<double>();
  return c;
}

nlohmann::json meta_to_json(const TrainMeta& m) {
  return {{"epoch", m.epoch},
          {"train_loss", m.train_loss},
          {"val_score", m.val_score},
          {"seed", m.seed},
          {"lr", m.optim.lr},
          {"beta1", m.optim.beta1},
          {"beta2", m.optim.beta2},
          {"eps", m.optim.eps},
          {"weight_decay", m.optim.weight_decay},
          {"batch_size", m.batch_size},
          {"epochs", m.epochs},
          {"train_n", m.train_n},
          {"train_p", m.train_p}};
}

TrainMeta meta_from_json(const nlohmann::json& j) {
  TrainMeta m;
  m.epoch = j.at("epoch").get<std::size_t>();
  m.train_loss = j.at("train_loss").get<double>();
  m.val_score = j.at("val_score").get<double>();
  m.seed = j.at("seed").get<std::uint64_t>();
  m.optim.lr = j.at("lr").get<double>();
  m.optim.beta1 = j.at("beta1").get<double>();
  m.optim.beta2 = j.at("beta2").get<double>();
  m.optim.eps = j.at("eps").get<double>();
  m.optim.weight_decay = j.at("weight_decay").get<double>();
  m.batch_size = j.at("batch_size").get<std::size_t>();
  m.epochs = j.at("epochs").get<std::size_t>();
  m.train_n = j.at("train_n").get<std::size_t>();
  m.train_p = j.at("train_p").get<double>();
  return m;
}

template <class U>
void put(std::string& out, U v) {
  char buf[sizeof(U)];
  std::memcpy(buf, &v, sizeof(U));
  out.append(buf, sizeof(U));
}

class Reader {
 public:
  Reader(const std::string& bytes, std::size_t pos) : bytes_(bytes), pos_(pos) {}

  template <class U>
  U get() {
    U v;
    need(sizeof(U));
    std::memcpy(&v, bytes_.data() + pos_, sizeof(U));
    pos_ += sizeof(U);
    return v;
  }
  std::string get_string(std::size_t len) {
    need(len);
    std::string s = bytes_.substr(pos_, len);
    pos_ += len;
    return s;
  }
  void get_floats(float* dst, std::size_t count) {
    need(count * sizeof(float));
    std::memcpy(dst, bytes_.data() + pos_, count * sizeof(float));
    pos_ += count * sizeof(float);
  }
  bool at_end() const { return pos_ == bytes_.size(); }

 private:
  void need(std::size_t len) const {
    if (bytes_.size() - pos_ < len) throw CorruptFileError("checkpoint is truncated");
  }
  const std::string& bytes_;
  std::size_t pos_;
};

}  // namespace

void save_checkpoint(const ModelCheckpoint& ckpt, const std::filesystem::path& path) {
  std::size_t count = 0;
  ckpt.params.for_each([&count](const nn::Parameter<float>&) { ++count; });
  nlohmann::json header;
  header["format"] = kFormatPrefix + std::to_string(ckpt.format_version);
  header["format_version"] = ckpt.format_version;
  header["config"] = config_to_json(ckpt.config);
  header["train_meta"] = meta_to_json(ckpt.meta);
  header["tensor_count"] = count;

  std::string bytes = header.dump();
  bytes.push_back('\n');
  ckpt.params.for_each([&bytes](const nn::Parameter<float>& p) {
    put<std::uint32_t>(bytes, static_cast<std::uint32_t>(p.name.size()));
    bytes += p.name;
    put<std::uint32_t>(bytes, static_cast<std::uint32_t>(p.value.shape.size()));
    for (std::size_t dim : p.value.shape) put<std::uint64_t>(bytes, dim);
    bytes.append(reinterpret_cast<const char*>(p.value.data.data()), p.value.data.size() * sizeof(float));
  });

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot open " + path.string() + " for writing");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error("write failed: " + path.string());
}

ModelCheckpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  const std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  const auto newline = bytes.find('\n');
  if (newline == std::string::npos) throw CorruptFileError("checkpoint header is missing or truncated");

  nlohmann::json header;
  try {
    header = nlohmann::json::parse(bytes.substr(0, newline));
  } catch (const nlohmann::json::exception& e) {
    throw CorruptFileError(std::string("checkpoint header is not valid JSON: ") + e.what());
  }

  ModelCheckpoint ckpt;
  std::size_t count = 0;
  try {
    const auto format = header.at("format").get<std::string>();
    const int version = header.at("format_version").get<int>();
    const std::string expected = kFormatPrefix + std::to_string(kCheckpointVersion);
    if (format.rfind(kFormatPrefix, 0) != 0)
      throw CorruptFileError("not a plume checkpoint (format '" + format + "')");
    if (format != expected || version != kCheckpointVersion)
      throw UnsupportedVersionError("unsupported checkpoint version '" + format + "' (version " +
                                    std::to_string(version) + "); this build reads " + expected);
    ckpt.format_version = version;
    ckpt.config = config_from_json(header.at("config"));
    ckpt.meta = meta_from_json(header.at("train_meta"));
    count = header.at("tensor_count").get<std::size_t>();
  } catch (const nlohmann::json::exception& e) {
    throw CorruptFileError(std::string("checkpoint header is incomplete: ") + e.what());
  }

  try {
    ckpt.params = make_params<float>(ckpt.config);
  } catch (const DomainError& e) {
    throw CorruptFileError(std::string("checkpoint config is invalid: ") + e.what());
  }
  std::size_t expected_count = 0;
  ckpt.params.for_each([&expected_count](const nn::Parameter<float>&) { ++expected_count; });
  if (count != expected_count)
    throw CorruptFileError("checkpoint holds " + std::to_string(count) + " tensors, config implies " +
                           std::to_string(expected_count));

  Reader r(bytes, newline + 1);
  ckpt.params.for_each([&r](nn::Parameter<float>& p) {
    const auto name_len = r.get<std::uint32_t>();
    const std::string name = r.get_string(name_len);
    if (name != p.name) throw CorruptFileError("expected tensor '" + p.name + "', found '" + name + "'");
    const auto rank = r.get<std::uint32_t>();
    std::vector<std::size_t> dims(rank);
    for (auto& d : dims) d = r.get<std::uint64_t>();
    if (dims != p.value.shape) throw CorruptFileError("tensor '" + name + "' has unexpected dims");
    r.get_floats(p.value.data.data(), p.value.data.size());
  });
  if (!r.at_end()) throw CorruptFileError("trailing bytes after the last tensor");
  return ckpt;
}

}  // namespace plume
