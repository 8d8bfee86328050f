#pragma once

// Registered finite-difference checks for every differentiable loss term and
// the attention/coupling paths they run through. Each case builds a small
// seeded instance in 64-bit.

#include "bdlf/beg.hpp"
#include "bdlf/dfe.hpp"
#include "bdlf/losses.hpp"
#include "bdlf/objective.hpp"
#include "bdlf/oracle.hpp"
#include "bdlf/synthdata.hpp"

#include <functional>
#include <string>
#include <vector>

namespace bdlf::gradcheck {

using oracle::GradCheckOptions;
using oracle::GradCheckReport;
using V = ad::Var<double>;
using Leaves = std::vector<std::pair<std::string, V>>;

struct Case {
  std::string name;
  std::function<GradCheckReport(const GradCheckOptions&)> run;
};

namespace detail {

inline V leaf(Eigen::Index r, Eigen::Index c, double stddev, Rng& rng) {
  return ad::parameter<double>(random_normal<double>(r, c, stddev, rng));
}

inline void add_store(Leaves& leaves, const ParamStore<double>& store) {
  for (const auto& e : store.entries()) leaves.emplace_back(e.name, e.var);
}

/// Weighted sum with fixed random weights: turns a matrix output into a scalar
/// whose gradient touches every entry differently.
inline V probe(const V& out, Rng& rng) {
  return ad::sum_all(ad::mul(out, ad::constant<double>(random_normal<double>(out.rows(), out.cols(), 1.0, rng))));
}

inline std::vector<int> pair_labels(int ids, int per_id) {
  std::vector<int> l;
  for (int b = 0; b < ids; ++b)
    for (int k = 0; k < per_id; ++k) l.push_back(b);
  return l;
}

inline std::vector<int> stacked(const std::vector<int>& pairs) {
  std::vector<int> l(pairs);
  l.insert(l.end(), pairs.begin(), pairs.end());
  return l;
}

constexpr Eigen::Index kC = 10;       // comprehensive width
constexpr Eigen::Index kDetail = 6;   // detail width
constexpr int kClasses = 4;
constexpr int kPairs = 6;             // 3 identities x 2

/// Shared fixture for the detail/base losses: z, detail features, both
/// heads, projection and fusion.
struct HeadFixture {
  Rng rng{4242};
  ParamStore<double> store;
  DetailHead<double> head;
  ProjectionHead<double> proj;
  BaseFusion<double> fusion;
  Linear<double> cls_b;
  V z, zd;
  std::vector<int> labels = stacked(pair_labels(3, 2));
  SKDConfig skd;

  HeadFixture() {
    head = DetailHead<double>(store, kC, kDetail, kClasses, rng);
    proj = ProjectionHead<double>(store, kC, rng, 0.2);
    fusion = BaseFusion<double>(store, kC, rng);
    cls_b = Linear<double>(store, "head.cls_b", kC, kClasses, rng, 0.5, false);
    z = leaf(2 * kPairs, kC, 1.0, rng);
    zd = leaf(2 * kPairs, kDetail, 1.0, rng);
  }

  FeaturePack<double> pack() const {
    FeaturePack<double> p;
    p.z = z;
    p.z_v = ad::slice_rows(z, 0, kPairs);
    p.z_i = ad::slice_rows(z, kPairs, kPairs);
    p.zd = zd;
    p.zd_v = ad::slice_rows(zd, 0, kPairs);
    p.zd_i = ad::slice_rows(zd, kPairs, kPairs);
    auto split = proj.project(z);
    p.zd_bar = split.zd_bar;
    p.zb = split.zb;
    auto fused = fusion.fuse(p.zb_v(), p.zb_i());
    p.zbf_bar = fused.zbf_bar;
    p.zbf = fused.zbf;
    return p;
  }

  Leaves leaves() const {
    Leaves l{{"z", z}, {"zd", zd}};
    add_store(l, store);
    return l;
  }
};

template <class Pick>
Case base_term(const std::string& name, Pick pick) {
  return {name, [name, pick](const GradCheckOptions& opt) {
            HeadFixture f;
            auto fn = [&f, &pick] {
              auto p = f.pack();
              return pick(beg_loss(p, f.head, f.proj, f.cls_b, f.labels, f.skd));
            };
            return oracle::check_gradients(name, fn, f.leaves(), opt);
          }};
}

template <class Pick>
Case approach_term(const std::string& name, Pick pick) {
  return {name, [name, pick](const GradCheckOptions& opt) {
            HeadFixture f;
            Rng rng(7);
            V zd_bar = leaf(2 * kPairs, kC, 0.5, rng);
            auto fn = [&] { return pick(approach_losses(zd_bar, f.zd, f.head, f.skd)); };
            Leaves l{{"zd_bar", zd_bar}, {"zd", f.zd}};
            add_store(l, f.store);
            return oracle::check_gradients(name, fn, l, opt);
          }};
}

template <class Pick>
Case detail_term(const std::string& name, Pick pick) {
  return {name, [name, pick](const GradCheckOptions& opt) {
            HeadFixture f;
            auto fn = [&] { return pick(dfe_loss(f.zd, f.z, f.head, f.cls_b, f.labels)); };
            return oracle::check_gradients(name, fn, f.leaves(), opt);
          }};
}

inline ModelConfig tiny_model(bool image) {
  ModelConfig mc;
  mc.backbone.stages = {6, 8, 10};
  mc.backbone.split_after_stage = 2;
  mc.backbone.flat_mode = !image;
  mc.backbone.input_shape = image ? ObservationShape::image(3, 6, 6) : ObservationShape::flat(12);
  mc.dfe_depth = 2;
  mc.n_classes = 4;
  mc.init_seed = 99;
  return mc;
}

inline Case total_case(const std::string& name, bool image) {
  return {name, [name, image](const GradCheckOptions& opt) {
            SynthSpec spec;
            spec.n_identities = 4;
            spec.samples_per_modality_per_id = 4;
            spec.shared_dim = 3;
            spec.specific_dim = 3;
            spec.observation_shape = image ? ObservationShape::image(3, 6, 6) : ObservationShape::flat(12);
            spec.seed = 5;
            auto ds = make_dataset(spec);
            Rng rng(11);
            auto batch = sample_pk_batch(ds.data, 2, 2, rng);
            BdlfModel<double> model(tiny_model(image));
            // Break the zero start of the coupling nets so every path carries gradient.
            Rng init(12);
            for (auto& e : model.params().entries()) {
              if (e.name.rfind("dfe.block", 0) == 0 && e.name.find(".1.") != std::string::npos) {
                e.var.mutable_value() = random_normal<double>(e.var.rows(), e.var.cols(), 0.1, init);
              }
            }
            auto fn = [&] { return model.total_loss(model.forward(batch), batch.labels).total; };
            Leaves l;
            add_store(l, model.params());
            return oracle::check_gradients(name, fn, l, opt);
          }};
}

}  // namespace detail

inline std::vector<Case> all_cases() {
  using namespace detail;
  std::vector<Case> cases;

  cases.push_back({"l_skd", [](const GradCheckOptions& opt) {
                     Rng rng(1);
                     V zb_v = leaf(6, 8, 1.0, rng);
                     V zb_i = ad::parameter<double>(zb_v.value() + random_normal<double>(6, 8, 0.3, rng));
                     V zd_v = leaf(6, 8, 1.0, rng);
                     V zd_i = ad::parameter<double>(0.6 * zd_v.value() + random_normal<double>(6, 8, 0.8, rng));
                     SKDConfig cfg;
                     auto fn = [&] { return skd_loss(zb_v, zb_i, zd_v, zd_i, cfg); };
                     return oracle::check_gradients("l_skd", fn,
                                                    {{"zb_v", zb_v}, {"zb_i", zb_i}, {"zd_v", zd_v}, {"zd_i", zd_i}},
                                                    opt);
                   }});

  cases.push_back({"pearson_corr", [](const GradCheckOptions& opt) {
                     Rng rng(2);
                     V a = leaf(5, 7, 1.0, rng), b = leaf(5, 7, 1.0, rng);
                     auto fn = [&] { return pearson_corr(a, b); };
                     return oracle::check_gradients("pearson_corr", fn, {{"a", a}, {"b", b}}, opt);
                   }});

  cases.push_back({"l_fkl", [](const GradCheckOptions& opt) {
                     Rng rng(3);
                     V zd_bar = leaf(8, 10, 0.5, rng), zd = leaf(8, 6, 0.5, rng);
                     auto fn = [&] { return ad::mean_all(difference_map(zd_bar, zd)); };
                     return oracle::check_gradients("l_fkl", fn, {{"zd_bar", zd_bar}, {"zd", zd}}, opt);
                   }});

  cases.push_back(approach_term("l_dkl", [](const ApproachLosses<double>& a) { return a.l_dkl; }));
  cases.push_back(approach_term("l_dcorr", [](const ApproachLosses<double>& a) { return a.l_dcorr; }));
  cases.push_back(approach_term("l_app", [](const ApproachLosses<double>& a) { return a.l_app; }));

  cases.push_back({"l_orth", [](const GradCheckOptions& opt) {
                     Rng rng(4);
                     ParamStore<double> store;
                     ProjectionHead<double> proj(store, 6, rng, 0.3);
                     auto fn = [&] { return proj.orth_penalty(); };
                     return oracle::check_gradients("l_orth", fn, {{"P", proj.matrix()}}, opt);
                   }});

  cases.push_back(detail_term("l_id_D", [](const DetailLosses<double>& d) { return d.l_id_D; }));
  cases.push_back(detail_term("l_odkl", [](const DetailLosses<double>& d) { return d.l_odkl; }));
  cases.push_back(detail_term("l_DFE", [](const DetailLosses<double>& d) { return d.l_DFE; }));

  cases.push_back(base_term("l_id_B", [](const BaseLosses<double>& b) { return b.l_id_B; }));
  cases.push_back(base_term("l_bkl", [](const BaseLosses<double>& b) { return b.l_bkl; }));
  cases.push_back(base_term("l_id_F", [](const BaseLosses<double>& b) { return b.l_id_F; }));
  cases.push_back(base_term("l_fbkl", [](const BaseLosses<double>& b) { return b.l_fbkl; }));
  cases.push_back(base_term("l_BEG", [](const BaseLosses<double>& b) { return b.l_BEG; }));

  cases.push_back({"l_okl", [](const GradCheckOptions& opt) {
                     HeadFixture f;
                     auto fn = [&] {
                       auto logits = f.cls_b(f.z);
                       return mutual_align(ad::slice_rows(logits, 0, kPairs), ad::slice_rows(logits, kPairs, kPairs));
                     };
                     return oracle::check_gradients("l_okl", fn, f.leaves(), opt);
                   }});

  cases.push_back({"l_id", [](const GradCheckOptions& opt) {
                     HeadFixture f;
                     auto fn = [&] { return id_loss(f.cls_b(f.z), f.labels); };
                     return oracle::check_gradients("l_id", fn, f.leaves(), opt);
                   }});

  cases.push_back({"l_tri", [](const GradCheckOptions& opt) {
                     Rng rng(5);
                     V emb = leaf(12, 5, 1.0, rng);
                     const auto labels = stacked(pair_labels(3, 2));
                     auto fn = [&] { return triplet_loss(emb, labels, 0.3); };
                     return oracle::check_gradients("l_tri", fn, {{"emb", emb}}, opt);
                   }});

  cases.push_back({"fusion_channel", [](const GradCheckOptions& opt) {
                     Rng rng(6);
                     ParamStore<double> store;
                     BaseFusion<double> fusion(store, kC, rng);
                     V zb_v = leaf(kPairs, kC, 1.0, rng), zb_i = leaf(kPairs, kC, 1.0, rng);
                     Rng w(60);
                     const Matrix<double> weights = random_normal<double>(kPairs, kC, 1.0, w);
                     auto fn = [&] {
                       return ad::sum_all(ad::mul(fusion.fuse(zb_v, zb_i).zbf_bar, ad::constant<double>(weights)));
                     };
                     Leaves l{{"zb_v", zb_v}, {"zb_i", zb_i}};
                     add_store(l, store);
                     return oracle::check_gradients("fusion_channel", fn, l, opt);
                   }});

  cases.push_back({"fusion_batch", [](const GradCheckOptions& opt) {
                     Rng rng(7);
                     ParamStore<double> store;
                     BaseFusion<double> fusion(store, kC, rng);
                     V zb_v = leaf(kPairs, kC, 1.0, rng), zb_i = leaf(kPairs, kC, 1.0, rng);
                     Rng w(70);
                     const Matrix<double> weights = random_normal<double>(kPairs, kC, 1.0, w);
                     auto fn = [&] {
                       return ad::sum_all(ad::mul(fusion.fuse(zb_v, zb_i).zbf, ad::constant<double>(weights)));
                     };
                     Leaves l{{"zb_v", zb_v}, {"zb_i", zb_i}};
                     add_store(l, store);
                     return oracle::check_gradients("fusion_batch", fn, l, opt);
                   }});

  auto dfe_case = [](const std::string& name, bool spatial) {
    return Case{name, [name, spatial](const GradCheckOptions& opt) {
                  Rng rng(8);
                  ParamStore<double> store;
                  DetailExtractor<double> dfe(store, 8, 2, spatial, rng);
                  Rng init(80);
                  oracle::randomize_parameters(store, 0.3, init);
                  for (auto& e : store.entries()) {
                    if (e.name.find(".gamma") != std::string::npos) e.var.mutable_value().array() += 1.0;
                  }
                  const ad::SpatialShape shape = spatial ? ad::SpatialShape{4, 3, 3} : ad::SpatialShape{4, 1, 1};
                  V xv = leaf(shape.n * shape.sites(), 8, 1.0, rng);
                  V xi = leaf(shape.n * shape.sites(), 8, 1.0, rng);
                  Rng w(81);
                  const Matrix<double> weights = random_normal<double>(8, 4, 1.0, w);
                  auto fn = [&] {
                    auto out = dfe.forward({xv, shape}, {xi, shape});
                    return ad::sum_all(ad::mul(out.zd, ad::constant<double>(weights)));
                  };
                  Leaves l{{"zm_v", xv}, {"zm_i", xi}};
                  add_store(l, store);
                  return oracle::check_gradients(name, fn, l, opt);
                }};
  };
  cases.push_back(dfe_case("dfe_flat", false));
  cases.push_back(dfe_case("dfe_spatial", true));

  cases.push_back(total_case("total_flat", false));
  cases.push_back(total_case("total_image", true));
  return cases;
}

}  // namespace bdlf::gradcheck
