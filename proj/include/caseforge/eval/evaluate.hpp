#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "caseforge/data/dataset.hpp"
#include "caseforge/data/grayscale.hpp"
#include "caseforge/eval/metrics.hpp"
#include "caseforge/models/bundle.hpp"

namespace caseforge {

enum class Modality { rgb, gray };

inline const char* modality_name(Modality m) { return m == Modality::rgb ? "rgb" : "gray"; }

inline Modality modality_from_name(const std::string& s) {
  if (s == "rgb") return Modality::rgb;
  if (s == "gray") return Modality::gray;
  throw Error(Errc::invalid_argument, "unknown modality '" + s + "'");
}

// Restricts which same-identity gallery rows count for a query: `same` keeps
// only entries wearing the query's clothing (clothing-fixed gallery), `diff`
// keeps only entries wearing different clothing (clothing-changed gallery).
// Cross-identity distractors always stay.
enum class ClothingFilter { any, same, diff };

inline const char* clothing_filter_name(ClothingFilter f) {
  switch (f) {
    case ClothingFilter::any: return "any";
    case ClothingFilter::same: return "same";
    default: return "diff";
  }
}

inline ClothingFilter clothing_filter_from_name(const std::string& s) {
  if (s == "any") return ClothingFilter::any;
  if (s == "same") return ClothingFilter::same;
  if (s == "diff") return ClothingFilter::diff;
  throw Error(Errc::invalid_argument, "unknown clothing filter '" + s + "'");
}

struct Protocol {
  Modality query_modality = Modality::rgb;
  Modality gallery_modality = Modality::rgb;
  bool same_view_exclusion = true;
  ClothingFilter clothing = ClothingFilter::any;

  // rr | gr | rg | gg (query then gallery; g = gray)
  static Protocol from_code(const std::string& code) {
    require(code.size() == 2, Errc::invalid_argument,
            "protocol code must be two of {r, g}, got '" + code + "'");
    auto parse = [&](char c) {
      if (c == 'r') return Modality::rgb;
      if (c == 'g') return Modality::gray;
      throw Error(Errc::invalid_argument, "protocol code must be two of {r, g}, got '" + code + "'");
    };
    Protocol p;
    p.query_modality = parse(code[0]);
    p.gallery_modality = parse(code[1]);
    return p;
  }

  std::string code() const {
    std::string s;
    s.push_back(query_modality == Modality::rgb ? 'r' : 'g');
    s.push_back(gallery_modality == Modality::rgb ? 'r' : 'g');
    return s;
  }
};

struct RowMeta {
  int identity_id = 0;
  int clothing_id = 0;
  int pose_id = 0;
  int view_id = 0;
  Modality modality = Modality::rgb;
};

// Matrix of pooled shape features with per-row metadata.
struct EmbeddingTable {
  Tensor<float> features;  // (N, d)
  std::vector<RowMeta> rows;

  int64_t size() const { return features.ndim() ? features.dim(0) : 0; }
  int64_t dim() const { return features.ndim() ? features.dim(1) : 0; }
};

// Row i = shape_encode(image_i after optional grayscale conversion).
inline EmbeddingTable embed(const ModelBundle<float>& bundle, const Dataset& ds, Split split,
                            Modality modality, bool l2_normalize = false) {
  const auto& idx = ds.split_indices(split);
  require(!idx.empty(), Errc::empty_split,
          std::string("embed: split '") + split_name(split) + "' is empty");
  const auto& cfg = bundle.cfg;
  EmbeddingTable table;
  table.features = Tensor<float>({static_cast<int64_t>(idx.size()), cfg.feature_dim});
  table.rows.reserve(idx.size());

  NoGradGuard ng;
  const int64_t chunk = 64;
  const int64_t img_elems = static_cast<int64_t>(cfg.image_h) * cfg.image_w * 3;
  for (int64_t start = 0; start < static_cast<int64_t>(idx.size()); start += chunk) {
    const int64_t b = std::min<int64_t>(chunk, static_cast<int64_t>(idx.size()) - start);
    Tensor<float> batch({b, cfg.image_h, cfg.image_w, 3});
    for (int64_t i = 0; i < b; ++i) {
      const auto& img = ds.images[static_cast<size_t>(idx[static_cast<size_t>(start + i)])];
      check_shape(img, {cfg.image_h, cfg.image_w, 3}, "embed");
      if (modality == Modality::gray) {
        auto g = to_grayscale(img);
        std::copy_n(g.data(), img_elems, batch.data() + i * img_elems);
      } else {
        std::copy_n(img.data(), img_elems, batch.data() + i * img_elems);
      }
    }
    auto enc = bundle.shape_encode(batch);
    std::copy_n(enc.features.data(), b * cfg.feature_dim,
                table.features.data() + start * cfg.feature_dim);
  }
  for (int64_t i : idx) {
    const auto& s = ds.manifest.samples[static_cast<size_t>(i)];
    table.rows.push_back({s.identity_id, s.clothing_id, s.pose_id, s.view_id, modality});
  }
  if (l2_normalize) {
    for (int64_t i = 0; i < table.size(); ++i) {
      float* row = table.features.data() + i * table.dim();
      double norm = 0;
      for (int64_t j = 0; j < table.dim(); ++j) norm += static_cast<double>(row[j]) * row[j];
      norm = std::sqrt(norm);
      if (norm > 0)
        for (int64_t j = 0; j < table.dim(); ++j) row[j] = static_cast<float>(row[j] / norm);
    }
  }
  return table;
}

struct EvalReport {
  Protocol protocol;
  std::vector<double> cmc;  // rank-1..K accuracies
  double map = 0;
  int64_t n_query = 0;
  int64_t n_gallery = 0;
  int64_t dropped_queries = 0;

  double rank1() const { return cmc.empty() ? 0.0 : cmc.front(); }
  double rank(int k) const {
    require(k >= 1 && k <= static_cast<int>(cmc.size()), Errc::invalid_argument,
            "rank-k out of range");
    return cmc[static_cast<size_t>(k - 1)];
  }
};

// Nearest-neighbor retrieval of queries against the gallery under the
// protocol's modalities, exclusion rule and clothing filter.
inline EvalReport evaluate_tables(const EmbeddingTable& queries, const EmbeddingTable& gallery,
                                  const Protocol& protocol, int64_t cmc_k = 20) {
  require(queries.size() > 0, Errc::empty_split, "evaluate: no query rows");
  require(gallery.size() > 0, Errc::empty_gallery, "evaluate: no gallery rows");
  require(queries.dim() == gallery.dim(), Errc::shape_mismatch,
          "evaluate: query dim != gallery dim");

  std::vector<std::vector<int64_t>> rank_lists;
  std::vector<std::vector<char>> relevance;
  int64_t dropped = 0;

  for (int64_t q = 0; q < queries.size(); ++q) {
    const auto& qm = queries.rows[static_cast<size_t>(q)];
    std::vector<char> excluded(static_cast<size_t>(gallery.size()), 0);
    std::vector<char> rel(static_cast<size_t>(gallery.size()), 0);
    int64_t n_rel = 0;
    for (int64_t g = 0; g < gallery.size(); ++g) {
      const auto& gm = gallery.rows[static_cast<size_t>(g)];
      const bool same_id = gm.identity_id == qm.identity_id;
      bool excl = false;
      if (protocol.same_view_exclusion && same_id && gm.view_id == qm.view_id) excl = true;
      if (same_id && protocol.clothing == ClothingFilter::same && gm.clothing_id != qm.clothing_id)
        excl = true;
      if (same_id && protocol.clothing == ClothingFilter::diff && gm.clothing_id == qm.clothing_id)
        excl = true;
      excluded[static_cast<size_t>(g)] = excl ? 1 : 0;
      if (same_id && !excl) {
        rel[static_cast<size_t>(g)] = 1;
        ++n_rel;
      }
    }
    if (n_rel == 0) {
      ++dropped;
      continue;
    }
    rank_lists.push_back(rank_gallery(queries.features.data() + q * queries.dim(),
                                      gallery.features, excluded));
    relevance.push_back(std::move(rel));
  }

  require(!rank_lists.empty(), Errc::invalid_argument,
          "evaluate: every query was dropped (no relevant gallery items)");

  EvalReport report;
  report.protocol = protocol;
  const int64_t k = std::min<int64_t>(cmc_k, gallery.size());
  report.cmc = cmc_curve(rank_lists, relevance, k);
  report.map = mean_average_precision(rank_lists, relevance);
  report.n_query = static_cast<int64_t>(rank_lists.size());
  report.n_gallery = gallery.size();
  report.dropped_queries = dropped;
  return report;
}

inline EvalReport evaluate(const ModelBundle<float>& bundle, const Dataset& ds,
                           const Protocol& protocol, int64_t cmc_k = 20,
                           bool l2_normalize = false) {
  auto queries = embed(bundle, ds, Split::query, protocol.query_modality, l2_normalize);
  auto gallery = embed(bundle, ds, Split::gallery, protocol.gallery_modality, l2_normalize);
  return evaluate_tables(queries, gallery, protocol, cmc_k);
}

// ---------------------------------------------------------------------------
// report / embedding table serialization
// ---------------------------------------------------------------------------

inline nlohmann::json report_to_json(const EvalReport& r) {
  return nlohmann::json{{"protocol", r.protocol.code()},
                        {"query_modality", modality_name(r.protocol.query_modality)},
                        {"gallery_modality", modality_name(r.protocol.gallery_modality)},
                        {"same_view_exclusion", r.protocol.same_view_exclusion},
                        {"clothing_filter", clothing_filter_name(r.protocol.clothing)},
                        {"cmc", r.cmc},
                        {"map", r.map},
                        {"n_query", r.n_query},
                        {"n_gallery", r.n_gallery},
                        {"dropped_queries", r.dropped_queries}};
}

inline EvalReport report_from_json(const nlohmann::json& j) {
  EvalReport r;
  r.protocol = Protocol::from_code(j.at("protocol").get<std::string>());
  r.protocol.same_view_exclusion = j.at("same_view_exclusion").get<bool>();
  r.protocol.clothing = clothing_filter_from_name(j.at("clothing_filter").get<std::string>());
  r.cmc = j.at("cmc").get<std::vector<double>>();
  r.map = j.at("map").get<double>();
  r.n_query = j.at("n_query").get<int64_t>();
  r.n_gallery = j.at("n_gallery").get<int64_t>();
  r.dropped_queries = j.at("dropped_queries").get<int64_t>();
  return r;
}

// embeddings.bin: a tensor archive holding the feature matrix plus aligned
// per-row metadata columns.
inline void save_embeddings(const std::filesystem::path& path, const EmbeddingTable& t) {
  TensorArchiveWriter w;
  w.add("features", t.features);
  const int64_t n = t.size();
  Tensor<int64_t> ids({n}), cloth({n}), pose({n}), view({n}), modal({n});
  for (int64_t i = 0; i < n; ++i) {
    const auto& m = t.rows[static_cast<size_t>(i)];
    ids[i] = m.identity_id;
    cloth[i] = m.clothing_id;
    pose[i] = m.pose_id;
    view[i] = m.view_id;
    modal[i] = m.modality == Modality::gray ? 1 : 0;
  }
  w.add("identity_id", ids);
  w.add("clothing_id", cloth);
  w.add("pose_id", pose);
  w.add("view_id", view);
  w.add("modality", modal);
  w.save(path);
}

inline EmbeddingTable load_embeddings(const std::filesystem::path& path) {
  TensorArchiveReader r(path);
  EmbeddingTable t;
  t.features = r.get<float>("features");
  const auto ids = r.get<int64_t>("identity_id");
  const auto cloth = r.get<int64_t>("clothing_id");
  const auto pose = r.get<int64_t>("pose_id");
  const auto view = r.get<int64_t>("view_id");
  const auto modal = r.get<int64_t>("modality");
  require(ids.numel() == t.features.dim(0), Errc::bad_manifest,
          "embeddings: metadata length != feature rows");
  for (int64_t i = 0; i < ids.numel(); ++i) {
    t.rows.push_back({static_cast<int>(ids[i]), static_cast<int>(cloth[i]),
                      static_cast<int>(pose[i]), static_cast<int>(view[i]),
                      modal[i] ? Modality::gray : Modality::rgb});
  }
  return t;
}

}  // namespace caseforge
