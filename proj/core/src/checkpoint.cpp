#include <cstring>
#include <fstream>

#include <nlohmann/json.hpp>

#include "dass/errors.hpp"
#include "dass/models.hpp"

namespace dass {

namespace {

constexpr char kMagic[4] = {'D', 'S', 'C', 'K'};
constexpr uint32_t kVersion = 1;

template <class T>
void write_pod(std::ostream& os, const T& v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <class T>
T read_pod(std::istream& is) {
  T v{};
  is.read(reinterpret_cast<char*>(&v), sizeof(T));
  return v;
}

}  // namespace

void save_checkpoint(const ModelHandle& h, const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("checkpoint: cannot open for write: " + path);

  nlohmann::json meta;
  if (h.kind == ModelKind::NoiseEstimator) {
    meta["arch"] = {{"in_ch", h.ucfg.in_ch},
                    {"base", h.ucfg.base},
                    {"temb_dim", h.ucfg.temb_dim},
                    {"temb_hidden", h.ucfg.temb_hidden}};
    meta["schedule_fp"] = h.schedule_fp;
  } else {
    meta["arch"] = {{"in_ch", h.scfg.in_ch},
                    {"base", h.scfg.base},
                    {"num_classes", h.scfg.num_classes}};
    meta["stage"] = h.stage;
  }
  std::string meta_str = meta.dump();

  os.write(kMagic, 4);
  write_pod(os, kVersion);
  write_pod(os, static_cast<uint8_t>(h.kind == ModelKind::NoiseEstimator ? 0 : 1));
  write_pod(os, static_cast<uint32_t>(meta_str.size()));
  os.write(meta_str.data(), static_cast<std::streamsize>(meta_str.size()));

  auto ps = h.params();
  write_pod(os, static_cast<uint32_t>(ps.size()));
  for (auto& p : ps) {
    write_pod(os, static_cast<uint16_t>(p.name.size()));
    os.write(p.name.data(), static_cast<std::streamsize>(p.name.size()));
    write_pod(os, static_cast<uint64_t>(p.w->size()));
    os.write(reinterpret_cast<const char*>(p.w->data()),
             static_cast<std::streamsize>(p.w->size() * sizeof(float)));
  }
  if (!os) throw IoError("checkpoint: write failed: " + path);
}

ModelHandle load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("checkpoint: cannot open: " + path);
  char magic[4];
  is.read(magic, 4);
  if (std::memcmp(magic, kMagic, 4) != 0) throw DataError("checkpoint: bad magic: " + path);
  uint32_t version = read_pod<uint32_t>(is);
  if (version != kVersion) throw DataError("checkpoint: unsupported version");
  uint8_t kind = read_pod<uint8_t>(is);
  uint32_t meta_len = read_pod<uint32_t>(is);
  std::string meta_str(meta_len, '\0');
  is.read(meta_str.data(), meta_len);
  nlohmann::json meta = nlohmann::json::parse(meta_str);

  ModelHandle h;
  if (kind == 0) {
    UNetConfig cfg;
    cfg.in_ch = meta["arch"]["in_ch"];
    cfg.base = meta["arch"]["base"];
    cfg.temb_dim = meta["arch"]["temb_dim"];
    cfg.temb_hidden = meta["arch"]["temb_hidden"];
    h = ModelHandle::make_noise_estimator(cfg, 0);
    h.schedule_fp = meta["schedule_fp"];
  } else {
    SegNetConfig cfg;
    cfg.in_ch = meta["arch"]["in_ch"];
    cfg.base = meta["arch"]["base"];
    cfg.num_classes = meta["arch"]["num_classes"];
    h = ModelHandle::make_segmenter(cfg, 0);
    h.stage = meta.value("stage", -1);
  }

  uint32_t narrays = read_pod<uint32_t>(is);
  auto ps = h.params();
  if (narrays != ps.size()) throw DataError("checkpoint: array count mismatch");
  for (auto& p : ps) {
    uint16_t nlen = read_pod<uint16_t>(is);
    std::string name(nlen, '\0');
    is.read(name.data(), nlen);
    if (name != p.name) throw DataError("checkpoint: array name mismatch: " + name);
    uint64_t count = read_pod<uint64_t>(is);
    if (count != p.w->size()) throw DataError("checkpoint: array size mismatch: " + name);
    is.read(reinterpret_cast<char*>(p.w->data()),
            static_cast<std::streamsize>(count * sizeof(float)));
  }
  if (!is) throw IoError("checkpoint: truncated file: " + path);
  return h;
}

}  // namespace dass
