#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "gencal/cluster.hpp"
#include "gencal/config.hpp"
#include "gencal/data.hpp"
#include "gencal/diffusion.hpp"
#include "gencal/losses.hpp"
#include "gencal/pipeline.hpp"
#include "gencal/report.hpp"

namespace py = pybind11;
using namespace gencal;

namespace {

using Rows = std::vector<std::vector<double>>;

Matrix to_matrix(const Rows& rows) {
    const std::size_t cols = rows.empty() ? 0 : rows.front().size();
    Matrix m(rows.size(), cols);
    for (std::size_t r = 0; r < rows.size(); ++r) {
        if (rows[r].size() != cols) throw py::value_error("ragged rows");
        std::copy(rows[r].begin(), rows[r].end(), m.row(r).begin());
    }
    return m;
}

Rows to_rows(const Matrix& m) {
    Rows out(m.rows);
    for (std::size_t r = 0; r < m.rows; ++r) out[r].assign(m.row(r).begin(), m.row(r).end());
    return out;
}

Rows to_rows(const Tensor& t) { return to_rows(Matrix::from_tensor(t)); }

py::dict dataset_dict(const Dataset& d) {
    py::dict out;
    out["samples"] = to_rows(d.samples);
    out["labels"] = d.labels;
    out["num_classes"] = d.num_classes;
    out["kind"] = to_string(d.kind);
    return out;
}

/// Loss value and gradient with respect to each differentiable input.
py::tuple with_grads(Tensor loss, const std::vector<Tensor>& inputs) {
    backward(loss);
    py::list grads;
    for (const auto& t : inputs) {
        Matrix g(t.rows(), t.cols());
        if (t.has_grad()) std::copy(t.grad().begin(), t.grad().end(), g.values.begin());
        grads.append(to_rows(g));
    }
    return py::make_tuple(loss.item(), grads);
}

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "Generative calibration clustering core";

    py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
    py::register_exception<TrainingAborted>(m, "TrainingAborted", PyExc_RuntimeError);

    m.def("make_blobs", [](int k, std::size_t per_class, std::size_t dim, double separation, std::uint64_t seed) {
        return dataset_dict(make_blobs(k, per_class, dim, separation, seed));
    }, py::arg("k"), py::arg("per_class"), py::arg("dim"), py::arg("separation"), py::arg("seed"));
    m.def("make_rings", [](int k, std::size_t per_class, double separation, double noise, std::uint64_t seed) {
        return dataset_dict(make_rings(k, per_class, separation, noise, seed));
    }, py::arg("k"), py::arg("per_class"), py::arg("separation"), py::arg("noise"), py::arg("seed"));
    m.def("make_glyphs", [](int k, std::size_t per_class, std::size_t side, double noise, std::uint64_t seed) {
        return dataset_dict(make_glyphs(k, per_class, side, noise, seed));
    }, py::arg("k"), py::arg("per_class"), py::arg("side"), py::arg("noise"), py::arg("seed"));

    m.def("kmeans", [](const Rows& x, int k, std::uint64_t seed) {
        const ClusterResult r = kmeans(to_matrix(x), k, seed);
        return py::make_tuple(r.assignments, to_rows(r.centroids), r.inertia);
    }, py::arg("x"), py::arg("k"), py::arg("seed") = 0);
    m.def("hungarian", [](const Rows& cost) {
        const Assignment a = hungarian(to_matrix(cost));
        return py::make_tuple(a.row_to_col, a.cost);
    });
    m.def("accuracy", [](const std::vector<int>& pred, const std::vector<int>& truth, int k) {
        return accuracy(pred, truth, k);
    });
    m.def("nmi", [](const std::vector<int>& pred, const std::vector<int>& truth) { return nmi(pred, truth); });
    m.def("ari", [](const std::vector<int>& pred, const std::vector<int>& truth) { return ari(pred, truth); });

    m.def("l_clr", [](const Rows& feats, double tau) {
        Tensor f = to_matrix(feats).to_tensor(true);
        return with_grads(l_clr(f, {tau}), {f});
    }, py::arg("feats"), py::arg("tau") = 0.5);
    m.def("l_ce", [](const Rows& probs, const std::vector<int>& labels) {
        Tensor p = to_matrix(probs).to_tensor(true);
        return with_grads(l_ce(p, labels), {p});
    });
    m.def("l_d", [](const Rows& real, const std::vector<int>& real_labels, const Rows& gen,
                    const std::vector<int>& gen_labels, std::size_t k, std::vector<double> bandwidths) {
        Tensor r = to_matrix(real).to_tensor(true);
        Tensor g = to_matrix(gen).to_tensor(true);
        return with_grads(l_d({r, real_labels}, {g, gen_labels}, {std::move(bandwidths)}, k), {r, g});
    }, py::arg("real"), py::arg("real_labels"), py::arg("gen"), py::arg("gen_labels"), py::arg("k"),
       py::arg("bandwidths") = std::vector<double>{});
    m.def("l_cwm", [](const Rows& gen, const std::vector<int>& labels) {
        Tensor g = to_matrix(gen).to_tensor(true);
        return with_grads(l_cwm({g, labels}), {g});
    });
    m.def("l_ml", [](const Rows& probs, const std::vector<int>& labels) {
        Tensor p = to_matrix(probs).to_tensor(true);
        return with_grads(l_ml(p, labels), {p});
    });

    m.def("linear_schedule", [](int steps, double start, double end) {
        const NoiseSchedule s = linear_schedule(steps, start, end);
        std::vector<double> ab(static_cast<std::size_t>(steps));
        for (int t = 1; t <= steps; ++t) ab[static_cast<std::size_t>(t - 1)] = s.alpha_bar(t);
        return py::make_tuple(std::vector<double>(s.betas().begin(), s.betas().end()), ab);
    });
    m.def("forward_diffuse", [](int steps, double start, double end, const Rows& x0, const std::vector<int>& t,
                                const Rows& eps) {
        return to_rows(forward_diffuse(linear_schedule(steps, start, end), to_matrix(x0), t, to_matrix(eps)));
    });

    m.def("config_keys", &config_keys);
    m.def("parse_config", [](const std::string& text) { return config_entries(parse_config_text(text)); });
    m.def("run_experiment", [](const std::string& config_text) {
        const TrainConfig cfg = parse_config_text(config_text);
        ExperimentResult res;
        {
            py::gil_scoped_release release;
            res = run_experiment(cfg);
        }
        return report_json(res.report);
    }, py::arg("config_text") = "");
}
