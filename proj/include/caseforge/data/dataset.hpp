#pragma once

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "caseforge/core/rng.hpp"
#include "caseforge/core/serialize.hpp"
#include "caseforge/data/png_io.hpp"
#include "caseforge/data/sprite.hpp"

namespace caseforge {

using nlohmann::json;

enum class Split { train, query, gallery };

inline const char* split_name(Split s) {
  switch (s) {
    case Split::train: return "train";
    case Split::query: return "query";
    case Split::gallery: return "gallery";
  }
  return "?";
}

inline Split split_from_name(const std::string& s) {
  if (s == "train") return Split::train;
  if (s == "query") return Split::query;
  if (s == "gallery") return Split::gallery;
  throw Error(Errc::bad_manifest, "unknown split '" + s + "'");
}

struct SampleRecord {
  std::string file;
  int identity_id = 0;
  int clothing_id = 0;
  int pose_id = 0;
  int view_id = 0;
  Split split = Split::train;
  std::string sha256;
};

struct GeneratorConfig {
  int ids_train = 50;
  int ids_test = 50;
  int clothing_variants_test = 3;  // per test identity; >= 2
  int poses = 10;
  int views = 6;
  int image_h = 64;
  int image_w = 32;
  double delta_shape = 0.12;
  int palette_size = 128;
  double shirt_luma = 0.45;
  double pants_luma = 0.32;
  bool use_stripes = false;
  double background_noise = 0.05;
};

struct DatasetManifest {
  std::string version = "1";
  GeneratorConfig config;
  uint64_t seed = 0;
  std::vector<SampleRecord> samples;
  std::vector<ShapeParams> shape_params;  // indexed by identity_id

  std::map<std::string, int64_t> counts() const {
    std::map<std::string, int64_t> c{{"train", 0}, {"query", 0}, {"gallery", 0}};
    for (const auto& s : samples) c[split_name(s.split)]++;
    return c;
  }
};

// ---------------------------------------------------------------------------
// config / manifest json
// ---------------------------------------------------------------------------

inline json generator_config_to_json(const GeneratorConfig& c) {
  return json{{"ids_train", c.ids_train},
              {"ids_test", c.ids_test},
              {"clothing_variants_test", c.clothing_variants_test},
              {"poses", c.poses},
              {"views", c.views},
              {"image_h", c.image_h},
              {"image_w", c.image_w},
              {"delta_shape", c.delta_shape},
              {"palette_size", c.palette_size},
              {"shirt_luma", c.shirt_luma},
              {"pants_luma", c.pants_luma},
              {"use_stripes", c.use_stripes},
              {"background_noise", c.background_noise}};
}

inline GeneratorConfig generator_config_from_json(const json& j) {
  GeneratorConfig c;
  c.ids_train = j.at("ids_train").get<int>();
  c.ids_test = j.at("ids_test").get<int>();
  c.clothing_variants_test = j.at("clothing_variants_test").get<int>();
  c.poses = j.at("poses").get<int>();
  c.views = j.at("views").get<int>();
  c.image_h = j.at("image_h").get<int>();
  c.image_w = j.at("image_w").get<int>();
  c.delta_shape = j.at("delta_shape").get<double>();
  c.palette_size = j.at("palette_size").get<int>();
  c.shirt_luma = j.at("shirt_luma").get<double>();
  c.pants_luma = j.at("pants_luma").get<double>();
  c.use_stripes = j.at("use_stripes").get<bool>();
  c.background_noise = j.at("background_noise").get<double>();
  return c;
}

inline json manifest_to_json(const DatasetManifest& m) {
  json samples = json::array();
  for (const auto& s : m.samples) {
    samples.push_back(json{{"file", s.file},
                           {"identity_id", s.identity_id},
                           {"clothing_id", s.clothing_id},
                           {"pose_id", s.pose_id},
                           {"view_id", s.view_id},
                           {"split", split_name(s.split)},
                           {"sha256", s.sha256}});
  }
  json shapes = json::array();
  for (const auto& p : m.shape_params) {
    auto a = p.as_array();
    shapes.push_back(std::vector<double>(a.begin(), a.end()));
  }
  json counts;
  for (const auto& [k, v] : m.counts()) counts[k] = v;
  return json{{"version", m.version},
              {"seed", m.seed},
              {"generator", generator_config_to_json(m.config)},
              {"counts", counts},
              {"shape_params", shapes},
              {"samples", samples}};
}

inline DatasetManifest manifest_from_json(const json& j) {
  DatasetManifest m;
  require(j.contains("version"), Errc::bad_manifest, "manifest: missing 'version'");
  m.version = j.at("version").get<std::string>();
  require(m.version == "1", Errc::bad_manifest, "manifest: unsupported version " + m.version);
  m.seed = j.at("seed").get<uint64_t>();
  m.config = generator_config_from_json(j.at("generator"));
  for (const auto& sj : j.at("shape_params")) {
    auto v = sj.get<std::vector<double>>();
    require(v.size() == 5, Errc::bad_manifest, "manifest: shape_params entry must have 5 values");
    m.shape_params.push_back(ShapeParams::from_array({v[0], v[1], v[2], v[3], v[4]}));
  }
  for (const auto& sj : j.at("samples")) {
    SampleRecord r;
    r.file = sj.at("file").get<std::string>();
    r.identity_id = sj.at("identity_id").get<int>();
    r.clothing_id = sj.at("clothing_id").get<int>();
    r.pose_id = sj.at("pose_id").get<int>();
    r.view_id = sj.at("view_id").get<int>();
    r.split = split_from_name(sj.at("split").get<std::string>());
    r.sha256 = sj.at("sha256").get<std::string>();
    m.samples.push_back(std::move(r));
  }
  return m;
}

// ---------------------------------------------------------------------------
// invariant checks (used by both generate and load)
// ---------------------------------------------------------------------------

inline void check_manifest_invariants(const DatasetManifest& m) {
  std::set<int> train_ids, test_ids;
  std::map<int, std::set<int>> train_clothing, test_clothing;
  for (const auto& s : m.samples) {
    if (s.split == Split::train) {
      train_ids.insert(s.identity_id);
      train_clothing[s.identity_id].insert(s.clothing_id);
    } else {
      test_ids.insert(s.identity_id);
      test_clothing[s.identity_id].insert(s.clothing_id);
    }
  }
  for (int id : train_ids) {
    require(test_ids.find(id) == test_ids.end(), Errc::split_leakage,
            "identity " + std::to_string(id) + " appears in both train and test splits");
  }
  for (const auto& [id, cloth] : train_clothing) {
    require(cloth.size() == 1, Errc::bad_manifest,
            "train identity " + std::to_string(id) + " has " + std::to_string(cloth.size()) +
                " clothing variants (expected exactly 1)");
  }
  for (const auto& [id, cloth] : test_clothing) {
    require(cloth.size() >= 2, Errc::bad_manifest,
            "test identity " + std::to_string(id) + " has " + std::to_string(cloth.size()) +
                " clothing variants (expected >= 2)");
  }
}

// ---------------------------------------------------------------------------
// generation
// ---------------------------------------------------------------------------

namespace data_detail {

inline int64_t shape_grid_capacity(double delta) {
  if (delta <= 0) return std::numeric_limits<int64_t>::max();
  const double k = std::floor(1.0 / delta) + 1.0;
  double cap = 1.0;
  for (int i = 0; i < 5; ++i) cap *= k;
  return cap > 1e18 ? std::numeric_limits<int64_t>::max() : static_cast<int64_t>(cap);
}

inline std::vector<ShapeParams> sample_shape_params(int n, double delta, Rng& rng) {
  const int64_t capacity = shape_grid_capacity(delta);
  require(n <= capacity, Errc::unsatisfiable_config,
          "requested " + std::to_string(n) + " identities but delta_shape=" +
              std::to_string(delta) + " supports at most " + std::to_string(capacity) +
              " L-inf separated shape points");
  std::vector<ShapeParams> out;
  const int64_t max_tries = 4000LL * n + 4000;
  int64_t tries = 0;
  while (static_cast<int>(out.size()) < n) {
    require(tries++ < max_tries, Errc::unsatisfiable_config,
            "could not place " + std::to_string(n) + " shape points with separation " +
                std::to_string(delta) + " after " + std::to_string(max_tries) + " attempts");
    ShapeParams p{rng.uniform(), rng.uniform(), rng.uniform(), rng.uniform(), rng.uniform()};
    bool ok = true;
    for (const auto& q : out)
      if (p.linf_distance(q) < delta) {
        ok = false;
        break;
      }
    if (ok) out.push_back(p);
  }
  return out;
}

inline std::string sample_filename(const SampleRecord& r) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%04d_%04d_%04d_%04d.png", r.identity_id, r.clothing_id,
                r.pose_id, r.view_id);
  return std::string("images/") + split_name(r.split) + "/" + buf;
}

}  // namespace data_detail

inline void validate_generator_config(const GeneratorConfig& c) {
  require(c.ids_train >= 1 && c.ids_test >= 1, Errc::config_invalid,
          "ids_train and ids_test must be >= 1");
  require(c.clothing_variants_test >= 2, Errc::config_invalid,
          "clothing_variants_test must be >= 2 (test identities need clothing changes)");
  require(c.clothing_variants_test <= c.palette_size, Errc::unsatisfiable_config,
          "clothing_variants_test=" + std::to_string(c.clothing_variants_test) +
              " exceeds palette_size=" + std::to_string(c.palette_size));
  require(c.poses >= 1 && c.views >= 1, Errc::config_invalid, "poses and views must be >= 1");
  require(c.poses * c.views >= 2, Errc::config_invalid,
          "poses*views must be >= 2 so gallery entries exist besides the query");
  require(c.image_h >= 8 && c.image_w >= 8, Errc::config_invalid, "image size must be >= 8x8");
  require(c.delta_shape > 0 && c.delta_shape <= 1.0, Errc::config_invalid,
          "delta_shape must be in (0, 1]");
  require(c.background_noise >= 0 && c.background_noise <= 0.5, Errc::config_invalid,
          "background_noise must be in [0, 0.5]");
}

struct ClothingStyle {
  SpriteStyle style;
};

inline SpriteStyle clothing_style(const GeneratorConfig& c, int clothing_id) {
  SpriteStyle s;
  s.shirt = iso_luma_color(clothing_id, c.palette_size, c.shirt_luma);
  s.pants = iso_luma_color((clothing_id * 7 + 3) % c.palette_size, c.palette_size, c.pants_luma);
  s.stripes = c.use_stripes && (clothing_id % 2 == 1);
  return s;
}

// Renders one sample deterministically from (manifest seed, record metadata).
inline Tensor<float> render_sample(const DatasetManifest& m, const SampleRecord& r) {
  Rng noise = Rng(m.seed).fork(
      (static_cast<uint64_t>(r.identity_id) << 40) ^ (static_cast<uint64_t>(r.clothing_id) << 24) ^
      (static_cast<uint64_t>(r.pose_id) << 12) ^ static_cast<uint64_t>(r.view_id) ^
      (r.split == Split::train ? 0x1000000000000ull : 0x2000000000000ull));
  return render_sprite(m.shape_params[static_cast<size_t>(r.identity_id)],
                       clothing_style(m.config, r.clothing_id), r.pose_id, m.config.poses,
                       r.view_id, m.config.image_h, m.config.image_w, m.config.background_noise,
                       noise);
}

// Writes images/ and manifest.json under out_dir. Deterministic in
// (config, seed): same inputs produce byte-identical trees.
inline DatasetManifest generate_dataset(const GeneratorConfig& config, uint64_t seed,
                                        const std::filesystem::path& out_dir) {
  namespace fs = std::filesystem;
  validate_generator_config(config);

  DatasetManifest m;
  m.config = config;
  m.seed = seed;

  Rng rng(seed);
  m.shape_params =
      data_detail::sample_shape_params(config.ids_train + config.ids_test, config.delta_shape, rng);

  // clothing ids walk the palette so identities get disjoint colors whenever
  // the palette is large enough
  int next_cid = 0;
  auto take_cid = [&] { return (next_cid++) % config.palette_size; };

  for (int id = 0; id < config.ids_train; ++id) {
    const int cid = take_cid();
    for (int pose = 0; pose < config.poses; ++pose)
      for (int view = 0; view < config.views; ++view) {
        SampleRecord r{"", id, cid, pose, view, Split::train, ""};
        r.file = data_detail::sample_filename(r);
        m.samples.push_back(r);
      }
  }
  for (int t = 0; t < config.ids_test; ++t) {
    const int id = config.ids_train + t;
    std::vector<int> cids;
    for (int k = 0; k < config.clothing_variants_test; ++k) cids.push_back(take_cid());
    for (int k = 0; k < config.clothing_variants_test; ++k)
      for (int pose = 0; pose < config.poses; ++pose)
        for (int view = 0; view < config.views; ++view) {
          const Split split = (pose == 0 && view == 0) ? Split::query : Split::gallery;
          SampleRecord r{"", id, cids[static_cast<size_t>(k)], pose, view, split, ""};
          r.file = data_detail::sample_filename(r);
          m.samples.push_back(r);
        }
  }

  fs::create_directories(out_dir / "images" / "train");
  fs::create_directories(out_dir / "images" / "query");
  fs::create_directories(out_dir / "images" / "gallery");
  for (auto& r : m.samples) {
    const auto img = render_sample(m, r);
    const auto bytes = encode_png(img);
    r.sha256 = sha256_hex(bytes.data(), bytes.size());
    std::ofstream os(out_dir / r.file, std::ios::binary);
    require(static_cast<bool>(os), Errc::io_error, "cannot write " + (out_dir / r.file).string());
    os.write(reinterpret_cast<const char*>(bytes.data()),
             static_cast<std::streamsize>(bytes.size()));
    require(static_cast<bool>(os), Errc::io_error, "write failed " + (out_dir / r.file).string());
  }

  check_manifest_invariants(m);
  write_text_file(out_dir / "manifest.json", manifest_to_json(m).dump(2) + "\n");
  return m;
}

// ---------------------------------------------------------------------------
// loading
// ---------------------------------------------------------------------------

// Manifest plus decoded images, indexed per split.
struct Dataset {
  DatasetManifest manifest;
  std::vector<Tensor<float>> images;  // parallel to manifest.samples
  std::vector<int64_t> train_idx, query_idx, gallery_idx;

  const std::vector<int64_t>& split_indices(Split s) const {
    switch (s) {
      case Split::train: return train_idx;
      case Split::query: return query_idx;
      default: return gallery_idx;
    }
  }
};

inline Dataset load_dataset(const std::filesystem::path& dir, bool verify_checksums = true) {
  const auto manifest_path = dir / "manifest.json";
  require(std::filesystem::exists(manifest_path), Errc::missing_file,
          "missing manifest: " + manifest_path.string());
  Dataset ds;
  ds.manifest = manifest_from_json(json::parse(read_text_file(manifest_path)));
  check_manifest_invariants(ds.manifest);

  const auto& cfg = ds.manifest.config;
  ds.images.reserve(ds.manifest.samples.size());
  for (size_t i = 0; i < ds.manifest.samples.size(); ++i) {
    const auto& r = ds.manifest.samples[i];
    const auto path = dir / r.file;
    require(std::filesystem::exists(path), Errc::missing_file,
            "manifest references missing file: " + path.string());
    auto bytes = read_file_bytes(path);
    if (verify_checksums) {
      const auto digest = sha256_hex(bytes.data(), bytes.size());
      require(digest == r.sha256, Errc::checksum_mismatch,
              "checksum mismatch for " + r.file + " (expected " + r.sha256 + ", got " + digest +
                  ")");
    }
    auto img = decode_png(bytes);
    require(img.shape() == Shape({cfg.image_h, cfg.image_w, 3}), Errc::shape_mismatch,
            r.file + ": expected " + shape_str({cfg.image_h, cfg.image_w, 3}) + ", got " +
                shape_str(img.shape()));
    ds.images.push_back(std::move(img));
    switch (r.split) {
      case Split::train: ds.train_idx.push_back(static_cast<int64_t>(i)); break;
      case Split::query: ds.query_idx.push_back(static_cast<int64_t>(i)); break;
      case Split::gallery: ds.gallery_idx.push_back(static_cast<int64_t>(i)); break;
    }
  }
  return ds;
}

}  // namespace caseforge
