#include <pybind11/numpy.h>
#include <pybind11/operators.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <optional>
#include <sstream>

#include "logicforge/ar.hpp"
#include "logicforge/dag_repair.hpp"
#include "logicforge/das.hpp"
#include "logicforge/dataset.hpp"
#include "logicforge/errors.hpp"
#include "logicforge/pipeline.hpp"
#include "logicforge/vq.hpp"

namespace py = pybind11;
using namespace logicforge;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

ProbabilityMatrix to_matrix(const Array& a) {
    if (a.ndim() != 2 || a.shape(0) != a.shape(1)) throw ShapeError("expected a square matrix");
    const int n = static_cast<int>(a.shape(0));
    ProbabilityMatrix p(n, std::vector<double>(a.data(), a.data() + a.size()));
    p.check();
    return p;
}

Array to_array(const ProbabilityMatrix& p) {
    const py::ssize_t n = p.size();
    Array out({n, n});
    std::copy(p.data().begin(), p.data().end(), out.mutable_data());
    return out;
}

py::array_t<std::uint8_t> to_array(const BinaryMatrix& m) {
    const py::ssize_t n = static_cast<py::ssize_t>(m.size());
    py::array_t<std::uint8_t> out({n, n});
    auto v = out.mutable_unchecked<2>();
    for (py::ssize_t i = 0; i < n; ++i)
        for (py::ssize_t j = 0; j < n; ++j) v(i, j) = m[i][j];
    return out;
}

std::vector<std::string> table_rows(const TruthTable& t) {
    std::vector<std::string> rows;
    for (int k = 0; k < t.num_outputs(); ++k) rows.push_back(t.row_string(k));
    return rows;
}

CandidateScope scope_of(const std::string& s) {
    if (s == "all") return CandidateScope::AllEarlier;
    if (s == "previous") return CandidateScope::PreviousLayer;
    if (s == "previous+inputs") return CandidateScope::PreviousLayerAndInputs;
    throw ConfigError("unknown scope '" + s + "'");
}

py::dict report_dict(const DasReport& r) {
    py::dict d;
    d["steps_used"] = r.steps_used;
    d["final_loss"] = r.final_loss;
    d["accuracy"] = r.accuracy;
    d["used_nand_count"] = r.used_nand_count;
    d["search_space_gate_count"] = r.search_space_gate_count;
    d["bitsd_initial"] = r.bitsd_initial;
    d["converged"] = r.converged;
    d["reinit_count"] = r.reinit_count;
    return d;
}

struct NetSetup {
    LayeredNet net;
    std::optional<PriorStructure> prior;
};

NetSetup make_net(const TruthTable& table, const DasConfig& cfg, const std::optional<Array>& prior,
                  const std::optional<std::vector<int>>& layers) {
    NetSetup s;
    if (prior) {
        s.prior = prepare_prior(to_matrix(*prior), {}, table.num_inputs(), table.num_outputs());
        s.net = prior_net(*s.prior, cfg);
    } else {
        const auto hidden = layers ? *layers : default_hidden_widths(table.num_inputs(), table.num_outputs());
        s.net = uniform_net(table.num_inputs(), hidden, table.num_outputs(), cfg);
    }
    return s;
}

} // namespace

PYBIND11_MODULE(_logicforge, m) {
    m.doc() = "NAND circuit synthesis from truth tables";

    py::register_exception<ParseError>(m, "ParseError", PyExc_ValueError);
    py::register_exception<ValidationError>(m, "ValidationError", PyExc_ValueError);
    py::register_exception<ShapeError>(m, "ShapeError", PyExc_ValueError);
    py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
    py::register_exception<SizeError>(m, "SizeError", PyExc_ValueError);

    py::class_<Circuit>(m, "Circuit")
        .def_static("from_text", [](const std::string& s) { return circuit_from_string(s); })
        .def("to_text", &circuit_to_string)
        .def("__str__", &circuit_to_string)
        .def_property_readonly("size", &Circuit::size)
        .def_property_readonly("num_pis", &Circuit::num_pis)
        .def_property_readonly("num_pos", &Circuit::num_pos)
        .def_property_readonly("num_nands", &Circuit::num_nands)
        .def_property_readonly("kinds", [](const Circuit& c) {
            std::vector<std::string> k;
            for (auto x : c.kinds()) k.emplace_back(to_string(x));
            return k;
        })
        .def("edges", [](const Circuit& c) {
            std::vector<std::pair<int, int>> e;
            for (const auto& x : c.edges()) e.emplace_back(x.src, x.dst);
            return e;
        })
        .def("adjacency", [](const Circuit& c) { return to_array(c.adjacency_matrix()); })
        .def("validate", [](const Circuit& c) {
            std::vector<std::pair<std::string, std::vector<int>>> out;
            for (const auto& v : validate(c)) out.emplace_back(v.rule, v.nodes);
            return out;
        })
        .def("simulate", &simulate, py::arg("assignment"))
        .def("truth_table", [](const Circuit& c) { return table_rows(truth_table(c)); })
        .def("layer_widths", [](const Circuit& c) { return layerize(c).widths(); })
        .def("used_nands", &used_nands)
        .def(py::self == py::self);

    m.def(
        "dag_search",
        [](const Array& probs, const std::vector<int>& pis, const std::vector<int>& pos) {
            const RepairResult r = dag_search(to_matrix(probs), pis, pos);
            std::vector<std::tuple<int, int, double>> removed;
            for (const auto& e : r.removed_edges) removed.emplace_back(e.src, e.dst, e.probability);
            py::dict d;
            d["adjacency"] = to_array(r.adjacency);
            d["masked"] = to_array(r.masked);
            d["removed_edges"] = removed;
            return d;
        },
        py::arg("probs"), py::arg("pi_ids"), py::arg("po_ids"));

    m.def(
        "synthesize",
        [](const std::vector<std::string>& truth, std::optional<std::vector<int>> layers, std::optional<Array> prior,
           std::uint64_t seed, int max_steps, const std::string& scope, bool soft) {
            const TruthTable table = TruthTable::from_strings(truth);
            DasConfig cfg;
            cfg.seed = seed;
            cfg.max_steps = max_steps;
            cfg.scope = scope_of(scope);
            cfg.mode = soft ? SelectorMode::Soft : SelectorMode::Gumbel;
            cfg.check();
            NetSetup s = make_net(table, cfg, prior, layers);
            const ProbabilityMatrix* masked = s.prior ? &s.prior->repair.masked : nullptr;
            std::optional<SynthOutcome> out;
            {
                py::gil_scoped_release nogil;
                out.emplace(run_das(std::move(s.net), table, cfg, masked, "python", s.prior ? "prior-das" : "uniform-das"));
            }
            py::dict d;
            d["circuit"] = out->circuit;
            d["report"] = report_dict(out->record.report);
            d["exact"] = accuracy(out->circuit, table) == 1.0;
            d["wall_seconds"] = out->record.wall_seconds;
            return d;
        },
        py::arg("truth"), py::arg("layers") = py::none(), py::arg("prior") = py::none(), py::arg("seed") = 0,
        py::arg("max_steps") = 50000, py::arg("scope") = "all", py::arg("soft") = false);

    m.def(
        "bitsd",
        [](const std::vector<std::string>& truth, std::optional<std::vector<int>> layers, std::optional<Array> prior) {
            const TruthTable table = TruthTable::from_strings(truth);
            DasConfig cfg;
            return bitsd(make_net(table, cfg, prior, layers).net, table);
        },
        py::arg("truth"), py::arg("layers") = py::none(), py::arg("prior") = py::none());

    m.def(
        "aig_to_nand",
        [](const std::string& aag) {
            std::istringstream in(aag);
            return aig_to_nand(parse_aiger(in));
        },
        py::arg("aag"));

    m.def(
        "generate_prior",
        [](const std::vector<std::string>& truth, const std::string& vq_path, const std::string& ar_path,
           std::optional<int> nodes, int iterations, std::uint64_t seed) {
            const TruthTable table = TruthTable::from_strings(truth);
            VqModel vq = load_vq_checkpoint(vq_path);
            TransformerPredictor ar = load_ar_checkpoint(ar_path);
            if (ar.config().vq_hash != vq.config().hash())
                throw ConfigError("predictor checkpoint does not match the tokenizer");
            const Condition cond = Condition::from_truth_table(table);
            const int n = nodes ? *nodes : default_node_budget(cond);
            Rng rng(split_seed(seed, "decode"));
            DecodeResult decoded;
            ProbabilityMatrix probs = generate_structure(ar, vq, cond, n, iterations, rng, &decoded);
            py::dict d;
            d["probs"] = to_array(probs);
            d["tokens"] = decoded.tokens;
            return d;
        },
        py::arg("truth"), py::arg("vq"), py::arg("ar"), py::arg("nodes") = py::none(), py::arg("iterations") = 8,
        py::arg("seed") = 0);

    m.def(
        "tokenize",
        [](const Circuit& c, const std::string& vq_path) { return tokenize(c, load_vq_checkpoint(vq_path)); },
        py::arg("circuit"), py::arg("vq"));

    m.def("improvement_percent", &improvement_percent, py::arg("baseline"), py::arg("candidate"));
}
