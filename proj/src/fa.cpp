#include "eqfa/fa.hpp"

#include <memory>

#include "eqfa/errors.hpp"

namespace eqfa {

namespace {

template <class T>
const T& expect(const FaValue& value, const char* what) {
  const T* p = std::get_if<T>(&value);
  if (p == nullptr) throw DimensionMismatchError(std::string("action/value mismatch: ") + what);
  return *p;
}

}  // namespace

FaValue act(const EuclideanMotion& g, const ActionSpec& spec, const FaValue& value) {
  if (std::holds_alternative<FeatureAction>(spec)) {
    const auto& tag = std::get<FeatureAction>(spec);
    const auto& V = expect<FeatureMatrix>(value, "feature action expects FeatureMatrix");
    if (V.u.size() != tag.invariant_dim || V.U.rows() != tag.equivariant_rows)
      throw DimensionMismatchError("feature action: declared (a, b) split disagrees with value");
    return act_features(g, V);
  }
  if (std::holds_alternative<PointAction>(spec))
    return act_points(g, expect<Points>(value, "point action expects an n x 3 matrix"));
  if (std::holds_alternative<InvariantAction>(spec))
    return expect<Vector>(value, "invariant action expects a vector");
  return act_field(g, expect<ScalarField>(value, "field action expects a ScalarField"));
}

FaValue fa_apply(const std::function<FaValue(const FaValue&)>& phi,
                 const std::vector<EuclideanMotion>& frame, const ActionSpec& rho_in,
                 const ActionSpec& rho_out, const FaValue& V) {
  if (frame.empty()) throw Error("fa_apply: empty frame");
  const double inv_n = 1.0 / static_cast<double>(frame.size());

  if (std::holds_alternative<FieldAction>(rho_out)) {
    // Keep the transformed fields alive inside the returned closures.
    auto fields = std::make_shared<std::vector<ScalarField>>();
    fields->reserve(frame.size());
    for (const auto& g : frame) {
      FaValue out = phi(act(inverse(g), rho_in, V));
      fields->push_back(
          std::get<ScalarField>(act(g, rho_out, expect<ScalarField>(out, "field output"))));
    }
    ScalarField avg;
    avg.value = [fields, inv_n](const Vec3& x) {
      double s = 0.0;
      for (const auto& f : *fields) s += f.value(x);
      return s * inv_n;
    };
    avg.gradient = [fields, inv_n](const Vec3& x) {
      Vec3 s = Vec3::Zero();
      for (const auto& f : *fields) s += f.gradient(x);
      return Vec3(s * inv_n);
    };
    return avg;
  }

  bool first = true;
  FaValue acc;
  for (const auto& g : frame) {
    FaValue out = act(g, rho_out, phi(act(inverse(g), rho_in, V)));
    if (first) {
      acc = std::move(out);
      first = false;
      continue;
    }
    if (acc.index() != out.index())
      throw DimensionMismatchError("fa_apply: phi output alternative changed across frame");
    if (auto* fm = std::get_if<FeatureMatrix>(&acc)) {
      const auto& o = std::get<FeatureMatrix>(out);
      if (fm->u.size() != o.u.size() || fm->U.rows() != o.U.rows())
        throw DimensionMismatchError("fa_apply: phi output shape changed across frame");
      fm->u += o.u;
      fm->U += o.U;
    } else if (auto* pts = std::get_if<Points>(&acc)) {
      const auto& o = std::get<Points>(out);
      if (pts->rows() != o.rows())
        throw DimensionMismatchError("fa_apply: phi output shape changed across frame");
      *pts += o;
    } else {
      auto& v = std::get<Vector>(acc);
      const auto& o = std::get<Vector>(out);
      if (v.size() != o.size())
        throw DimensionMismatchError("fa_apply: phi output shape changed across frame");
      v += o;
    }
  }
  if (auto* fm = std::get_if<FeatureMatrix>(&acc)) {
    fm->u *= inv_n;
    fm->U *= inv_n;
  } else if (auto* pts = std::get_if<Points>(&acc)) {
    *pts *= inv_n;
  } else {
    std::get<Vector>(acc) *= inv_n;
  }
  return acc;
}

double fa_apply_pointwise(
    const std::function<double(const FeatureMatrix&, const Vec3&)>& psi_hat,
    const std::vector<EuclideanMotion>& frame_of_Z, const FeatureMatrix& Z, const Vec3& x) {
  if (frame_of_Z.empty()) throw Error("fa_apply_pointwise: empty frame");
  double s = 0.0;
  for (const auto& g : frame_of_Z) {
    const EuclideanMotion gi = inverse(g);
    FeatureMatrix Zi;
    Zi.u = Z.u;
    Zi.U = Z.U * gi.R.transpose();
    Zi.U.rowwise() += gi.t.transpose();
    s += psi_hat(Zi, act_point(gi, x));
  }
  return s / static_cast<double>(frame_of_Z.size());
}

}  // namespace eqfa
