// Python bindings for the core numeric operations, the IR metrics and
// trained-model scoring.

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "vip/adam.hpp"
#include "vip/eval.hpp"
#include "vip/model.hpp"
#include "vip/nn.hpp"
#include "vip/snapshot.hpp"

namespace py = pybind11;
using namespace vip;

namespace {

Tensor tensor_from_array(const py::array_t<double, py::array::c_style | py::array::forcecast>& a) {
    std::vector<std::size_t> shape(a.ndim());
    for (py::ssize_t i = 0; i < a.ndim(); ++i) shape[i] = static_cast<std::size_t>(a.shape(i));
    Tensor t(shape);
    std::copy_n(a.data(), t.size(), t.data.begin());
    return t;
}

py::array_t<double> array_from_tensor(const Tensor& t) {
    std::vector<py::ssize_t> shape(t.shape.begin(), t.shape.end());
    py::array_t<double> out(shape);
    std::copy(t.data.begin(), t.data.end(), out.mutable_data());
    return out;
}

Activation act_from_string(const std::string& s) {
    if (s == "relu") return Activation::relu;
    if (s == "identity") return Activation::identity;
    throw ConfigError("unknown activation: " + s);
}

RawSnapshot snapshot_from_array(
    const py::array_t<std::uint8_t, py::array::c_style | py::array::forcecast>& img) {
    if (img.ndim() != 3 || img.shape(2) != 3)
        throw ShapeError("expected an HxWx3 uint8 image");
    RawSnapshot snap;
    snap.height = static_cast<std::size_t>(img.shape(0));
    snap.width = static_cast<std::size_t>(img.shape(1));
    snap.pixels.assign(img.data(), img.data() + snap.width * snap.height * 3);
    return snap;
}

py::array_t<std::uint8_t> array_from_snapshot(const RawSnapshot& snap) {
    py::array_t<std::uint8_t> out({py::ssize_t(snap.height), py::ssize_t(snap.width),
                                   py::ssize_t(3)});
    std::copy(snap.pixels.begin(), snap.pixels.end(), out.mutable_data());
    return out;
}

}  // namespace

PYBIND11_MODULE(_vip, m) {
    m.doc() = "Snapshot-based visual ranking: numeric kernels, metrics and scoring";

    py::register_exception<Error>(m, "VipError");

    m.def(
        "conv2d_forward",
        [](const py::array_t<double, py::array::c_style | py::array::forcecast>& input,
           const py::array_t<double, py::array::c_style | py::array::forcecast>& kernels,
           const py::array_t<double, py::array::c_style | py::array::forcecast>& bias,
           const std::string& activation) {
            return array_from_tensor(conv2d_forward(tensor_from_array(input),
                                                    tensor_from_array(kernels),
                                                    tensor_from_array(bias),
                                                    act_from_string(activation)));
        },
        py::arg("input"), py::arg("kernels"), py::arg("bias"), py::arg("activation") = "relu",
        "Same-padded convolution over a CxHxW input with C_out x C_in x r x r kernels");

    m.def(
        "maxpool2d_forward",
        [](const py::array_t<double, py::array::c_style | py::array::forcecast>& input,
           std::size_t pool, std::size_t stride) {
            const auto res = maxpool2d_forward(tensor_from_array(input), pool, stride);
            py::array_t<std::uint32_t> argmax(py::ssize_t(res.argmax.size()));
            std::copy(res.argmax.begin(), res.argmax.end(), argmax.mutable_data());
            return py::make_tuple(array_from_tensor(res.out), argmax);
        },
        py::arg("input"), py::arg("pool"), py::arg("stride"),
        "Max pooling; returns (pooled, flat argmax indices)");

    m.def(
        "dense_forward",
        [](const py::array_t<double, py::array::c_style | py::array::forcecast>& v,
           const py::array_t<double, py::array::c_style | py::array::forcecast>& weight,
           const py::array_t<double, py::array::c_style | py::array::forcecast>& bias,
           const std::string& activation) {
            return array_from_tensor(dense_forward(tensor_from_array(v),
                                                   tensor_from_array(weight),
                                                   tensor_from_array(bias),
                                                   act_from_string(activation)));
        },
        py::arg("v"), py::arg("weight"), py::arg("bias"), py::arg("activation") = "identity");

    m.def(
        "lstm_cell_forward",
        [](const py::array_t<double, py::array::c_style | py::array::forcecast>& q,
           const py::array_t<double, py::array::c_style | py::array::forcecast>& h_prev,
           const py::array_t<double, py::array::c_style | py::array::forcecast>& c_prev,
           const py::array_t<double, py::array::c_style | py::array::forcecast>& W,
           const py::array_t<double, py::array::c_style | py::array::forcecast>& U,
           const py::array_t<double, py::array::c_style | py::array::forcecast>& b) {
            if (W.ndim() != 3 || W.shape(0) != 4 || U.ndim() != 3 || U.shape(0) != 4 ||
                b.ndim() != 2 || b.shape(0) != 4)
                throw ShapeError("stacked LSTM weights must be W[4,L,D], U[4,L,L], b[4,L]");
            const std::size_t L = static_cast<std::size_t>(W.shape(1));
            const std::size_t D = static_cast<std::size_t>(W.shape(2));
            auto slice = [](const py::array_t<double, py::array::c_style |
                                                          py::array::forcecast>& a,
                            int idx, std::vector<std::size_t> shape) {
                Tensor t(std::move(shape));
                const std::size_t n = t.size();
                std::copy_n(a.data() + idx * static_cast<py::ssize_t>(n), n, t.data.begin());
                return t;
            };
            // gate order: input, forget, candidate, output
            const Tensor Wi = slice(W, 0, {L, D}), Wf = slice(W, 1, {L, D}),
                         Wc = slice(W, 2, {L, D}), Wo = slice(W, 3, {L, D});
            const Tensor Ui = slice(U, 0, {L, L}), Uf = slice(U, 1, {L, L}),
                         Uc = slice(U, 2, {L, L}), Uo = slice(U, 3, {L, L});
            const Tensor bi = slice(b, 0, {L}), bf = slice(b, 1, {L}), bc = slice(b, 2, {L}),
                         bo = slice(b, 3, {L});
            const LstmWeights w{&Wi, &Wf, &Wc, &Wo, &Ui, &Uf, &Uc, &Uo, &bi, &bf, &bc, &bo};
            std::vector<double> qv(q.data(), q.data() + q.size());
            std::vector<double> hv(h_prev.data(), h_prev.data() + h_prev.size());
            std::vector<double> cv(c_prev.data(), c_prev.data() + c_prev.size());
            const auto step = lstm_cell_forward<double>(qv, hv, cv, w);
            return py::make_tuple(array_from_tensor(Tensor({L}, step.h)),
                                  array_from_tensor(Tensor({L}, step.c)));
        },
        py::arg("q"), py::arg("h_prev"), py::arg("c_prev"), py::arg("W"), py::arg("U"),
        py::arg("b"), "One LSTM step; gates stacked in (input, forget, candidate, output) order");

    m.def(
        "adam_step",
        [](py::array_t<double, py::array::c_style | py::array::forcecast> param,
           const py::array_t<double, py::array::c_style | py::array::forcecast>& grad,
           py::array_t<double, py::array::c_style | py::array::forcecast> m1,
           py::array_t<double, py::array::c_style | py::array::forcecast> m2,
           std::uint64_t step, double lr, double beta1, double beta2, double eps) {
            ParamSet ps;
            auto& p = ps.add("param", {static_cast<std::size_t>(param.size())},
                             ParamGroup::phi1, false);
            std::copy_n(param.data(), param.size(), p.tensor.data.begin());
            AdamState st = AdamState::init(ps);
            st.step = step;
            std::copy_n(m1.data(), m1.size(), st.first_moment[0].data.begin());
            std::copy_n(m2.data(), m2.size(), st.second_moment[0].data.begin());
            std::vector<Tensor> grads = ps.zero_grads();
            std::copy_n(grad.data(), grad.size(), grads[0].data.begin());
            adam_step(ps, grads, st, {lr, beta1, beta2, eps});
            return py::make_tuple(array_from_tensor(p.tensor),
                                  array_from_tensor(st.first_moment[0]),
                                  array_from_tensor(st.second_moment[0]), st.step);
        },
        py::arg("param"), py::arg("grad"), py::arg("m1"), py::arg("m2"), py::arg("step") = 0,
        py::arg("lr") = 0.001, py::arg("beta1") = 0.9, py::arg("beta2") = 0.999,
        py::arg("eps") = 1e-8,
        "One Adam update on a flat parameter vector; returns (param, m1, m2, step)");

    m.def("hinge_loss", &hinge_loss, py::arg("s_pos"), py::arg("s_neg"));

    m.def("precision_at_k", &precision_at_k, py::arg("ranked_grades"), py::arg("k"));
    m.def("ndcg_at_k", &ndcg_at_k, py::arg("ranked_grades"), py::arg("k"));
    m.def("average_precision", &average_precision, py::arg("ranked_grades"));

    m.def(
        "paired_ttest",
        [](const std::vector<double>& a, const std::vector<double>& b) {
            const TTestResult r = paired_ttest(a, b);
            return py::make_tuple(r.t, r.p);
        },
        py::arg("a"), py::arg("b"), "Two-sided paired t-test; returns (t, p)");

    m.def(
        "normalize_snapshot",
        [](const py::array_t<std::uint8_t, py::array::c_style | py::array::forcecast>& img) {
            return array_from_tensor(normalize(snapshot_from_array(img)).values);
        },
        py::arg("image"), "HxWx3 uint8 -> 3xHxW float64 in [-1, 1]");

    m.def(
        "downsample_snapshot",
        [](const py::array_t<std::uint8_t, py::array::c_style | py::array::forcecast>& img,
           std::size_t size) {
            return array_from_snapshot(downsample(snapshot_from_array(img), size, size));
        },
        py::arg("image"), py::arg("size"), "Box-filter down-sampling to size x size");

    m.def(
        "overlay_highlights",
        [](const py::array_t<std::uint8_t, py::array::c_style | py::array::forcecast>& img,
           const std::vector<std::tuple<std::uint32_t, std::uint32_t, std::uint32_t,
                                        std::uint32_t>>& rects) {
            std::vector<HighlightRect> hr;
            for (const auto& [px, py_, qx, qy] : rects) hr.push_back({px, py_, qx, qy});
            return array_from_snapshot(overlay_highlights(snapshot_from_array(img), hr));
        },
        py::arg("image"), py::arg("rects"),
        "Paint the highlight color behind ink inside each (px, py, qx, qy) rect");

    py::class_<VipModel>(m, "Model")
        .def(py::init([](const std::string& path) { return load_model_file(path); }),
             py::arg("path"))
        .def_property_readonly("variant",
                               [](const VipModel& m_) { return to_string(m_.config.variant); })
        .def_property_readonly("resolution",
                               [](const VipModel& m_) { return m_.config.resolution; })
        .def(
            "score",
            [](const VipModel& model,
               const py::object& image,
               const py::array_t<double, py::array::c_style | py::array::forcecast>& features) {
                Tensor f = tensor_from_array(features);
                if (model.scaler) f = model.scaler->apply(f);
                if (image.is_none()) return forward(nullptr, f, model.params, model.config);
                const RawSnapshot snap = snapshot_from_array(
                    image.cast<py::array_t<std::uint8_t,
                                           py::array::c_style | py::array::forcecast>>());
                const NormalizedSnapshot norm = normalize(snap);
                return forward(&norm, f, model.params, model.config);
            },
            py::arg("image"), py::arg("features"),
            "Relevance score for an already down-sampled HxWx3 uint8 snapshot (or None)")
        .def("decision_weights", [](const VipModel& model) {
            return dump_decision_weights(model.params, model.config);
        });
}
