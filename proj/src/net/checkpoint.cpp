#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include "stereoadapt/net/stereo_net.hpp"

namespace stereoadapt::net {
namespace {

constexpr const char* kMagic = "STEREOADAPT-CHECKPOINT";
constexpr int kVersion = 1;

std::string dims_string(const tensor::Shape& s) {
  std::string out;
  for (int i = 0; i < s.rank(); ++i) {
    if (i) out += "x";
    out += std::to_string(s[i]);
  }
  return out;
}

tensor::Shape parse_dims(const std::string& text) {
  std::vector<int> dims;
  std::stringstream ss(text);
  std::string part;
  while (std::getline(ss, part, 'x')) {
    try {
      std::size_t used = 0;
      const int d = std::stoi(part, &used);
      if (used != part.size() || d < 0) throw std::invalid_argument(part);
      dims.push_back(d);
    } catch (const std::exception&) {
      throw Error(ErrorCode::kMalformedFile, "bad shape '" + text + "' in checkpoint manifest");
    }
  }
  if (dims.empty()) throw Error(ErrorCode::kMalformedFile, "empty shape in checkpoint manifest");
  return tensor::Shape(std::move(dims));
}

std::uint32_t to_le(std::uint32_t v) {
  if constexpr (std::endian::native == std::endian::big) {
    v = ((v & 0xffu) << 24) | ((v & 0xff00u) << 8) | ((v >> 8) & 0xff00u) | (v >> 24);
  }
  return v;
}

}  // namespace

void save_checkpoint(const std::string& path, const StereoNet<float>& net) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::kIoFailure, "cannot open " + path + " for writing");
  const NetConfig& cfg = net.config();
  std::size_t offset = 0;
  std::ostringstream manifest;
  for (std::size_t i = 0; i < net.params.size(); ++i) {
    const auto& v = net.params.value(static_cast<ParamId>(i));
    manifest << net.params.name(static_cast<ParamId>(i)) << ' ' << dims_string(v.shape()) << ' ' << offset << '\n';
    offset += v.size() * sizeof(float);
  }
  out << kMagic << ' ' << kVersion << '\n'
      << "config levels=" << cfg.levels << " max_corr_disp=" << cfg.max_corr_disp
      << " in_channels=" << cfg.in_channels << " width=" << cfg.width_scale.num << '/' << cfg.width_scale.den << '\n'
      << "params " << net.params.size() << " payload_bytes " << offset << '\n'
      << manifest.str() << "end\n";
  for (std::size_t i = 0; i < net.params.size(); ++i) {
    for (float f : net.params.value(static_cast<ParamId>(i)).values()) {
      const std::uint32_t bits = to_le(std::bit_cast<std::uint32_t>(f));
      out.write(reinterpret_cast<const char*>(&bits), sizeof(bits));
    }
  }
  if (!out) throw Error(ErrorCode::kIoFailure, "write failed for " + path);
}

StereoNet<float> load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIoFailure, "cannot open checkpoint " + path);
  auto malformed = [&](const std::string& why) { return Error(ErrorCode::kMalformedFile, path + ": " + why); };

  std::string line;
  if (!std::getline(in, line)) throw malformed("empty file");
  {
    std::istringstream ss(line);
    std::string magic;
    int version = 0;
    if (!(ss >> magic >> version) || magic != kMagic) throw malformed("missing magic header");
    if (version != kVersion) throw malformed("unsupported version " + std::to_string(version));
  }

  NetConfig cfg;
  if (!std::getline(in, line)) throw malformed("missing config line");
  {
    std::istringstream ss(line);
    std::string tag, kv;
    ss >> tag;
    if (tag != "config") throw malformed("expected config line");
    while (ss >> kv) {
      const auto eq = kv.find('=');
      if (eq == std::string::npos) throw malformed("bad config entry " + kv);
      const std::string key = kv.substr(0, eq), val = kv.substr(eq + 1);
      try {
        if (key == "levels") {
          cfg.levels = std::stoi(val);
        } else if (key == "max_corr_disp") {
          cfg.max_corr_disp = std::stoi(val);
        } else if (key == "in_channels") {
          cfg.in_channels = std::stoi(val);
        } else if (key == "width") {
          const auto slash = val.find('/');
          if (slash == std::string::npos) throw malformed("bad width " + val);
          cfg.width_scale = {std::stoi(val.substr(0, slash)), std::stoi(val.substr(slash + 1))};
        } else {
          throw malformed("unknown config key " + key);
        }
      } catch (const std::invalid_argument&) {
        throw malformed("bad config value " + kv);
      }
    }
  }

  std::size_t count = 0, payload = 0;
  if (!std::getline(in, line)) throw malformed("missing params line");
  {
    std::istringstream ss(line);
    std::string tag, tag2;
    if (!(ss >> tag >> count >> tag2 >> payload) || tag != "params" || tag2 != "payload_bytes") {
      throw malformed("bad params line");
    }
  }

  struct Entry {
    std::string name;
    tensor::Shape shape;
    std::size_t offset;
  };
  std::vector<Entry> entries;
  for (std::size_t i = 0; i < count; ++i) {
    if (!std::getline(in, line)) throw malformed("truncated manifest");
    std::istringstream ss(line);
    std::string name, dims;
    std::size_t offset = 0;
    if (!(ss >> name >> dims >> offset)) throw malformed("bad manifest line: " + line);
    entries.push_back({name, parse_dims(dims), offset});
  }
  if (!std::getline(in, line) || line != "end") throw malformed("missing manifest terminator");

  std::vector<char> bytes(payload);
  in.read(bytes.data(), static_cast<std::streamsize>(payload));
  if (static_cast<std::size_t>(in.gcount()) != payload) throw malformed("truncated payload");
  if (in.peek() != std::char_traits<char>::eof()) throw malformed("trailing bytes after payload");

  ParamStore<float> params;
  for (const auto& e : entries) {
    const std::size_t n = e.shape.numel();
    if (e.offset % 4 != 0 || e.offset + n * 4 > payload) throw malformed("entry " + e.name + " out of payload range");
    std::vector<float> values(n);
    for (std::size_t j = 0; j < n; ++j) {
      std::uint32_t bits = 0;
      std::memcpy(&bits, bytes.data() + e.offset + j * 4, 4);
      values[j] = std::bit_cast<float>(to_le(bits));
    }
    params.add(e.name, Tensor<float>(e.shape, std::move(values)));
  }
  return assemble_network(cfg, std::move(params));
}

}  // namespace stereoadapt::net
