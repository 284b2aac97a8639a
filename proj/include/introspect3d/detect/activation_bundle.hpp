#pragma once

#include <cmath>
#include <stdexcept>
#include <string>

#include "introspect3d/core/tensor.hpp"
#include "introspect3d/io/tensor_store.hpp"

namespace i3d {

/// The three tapped tensors for one frame: processed point cloud (ppc),
/// mid-layer activations (mla) and last-layer activations (lla), each C×H×W.
/// Spatial dims are non-increasing ppc -> mla -> lla.
struct ActivationBundle {
  Tensor<float> ppc;
  Tensor<float> mla;
  Tensor<float> lla;
  std::string frame_id;

  void validate() const {
    for (const Tensor<float>* t : {&ppc, &mla, &lla}) {
      if (t->rank() != 3) throw std::invalid_argument("ActivationBundle: tensors must be C x H x W");
      for (float v : t->vec())
        if (!std::isfinite(v)) throw std::invalid_argument("ActivationBundle: non-finite value");
    }
    if (ppc.size(1) < mla.size(1) || mla.size(1) < lla.size(1) || ppc.size(2) < mla.size(2) ||
        mla.size(2) < lla.size(2))
      throw std::invalid_argument("ActivationBundle: spatial dims must be non-increasing");
  }
};

inline void write_activation_bundle(const ActivationBundle& b,
                                    const std::map<std::string, std::string>& extra_attrs,
                                    const std::filesystem::path& dir) {
  std::map<std::string, std::string> attrs = extra_attrs;
  attrs["frame_id"] = b.frame_id;
  store::write_bundle({store::TensorRecord::from_tensor("ppc", b.ppc),
                       store::TensorRecord::from_tensor("mla", b.mla),
                       store::TensorRecord::from_tensor("lla", b.lla)},
                      attrs, dir);
}

inline ActivationBundle read_activation_bundle(const std::filesystem::path& dir) {
  auto [records, attrs] = store::read_bundle(dir);
  ActivationBundle b;
  for (auto& r : records) {
    if (r.name == "ppc")
      b.ppc = r.to_tensor();
    else if (r.name == "mla")
      b.mla = r.to_tensor();
    else if (r.name == "lla")
      b.lla = r.to_tensor();
  }
  if (b.ppc.numel() == 0 || b.mla.numel() == 0 || b.lla.numel() == 0)
    throw store::StoreError("bundle " + dir.string() + " lacks ppc/mla/lla tensors");
  auto it = attrs.find("frame_id");
  b.frame_id = it != attrs.end() ? it->second : dir.filename().string();
  return b;
}

}  // namespace i3d
