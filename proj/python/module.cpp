#include "usda/analysis.hpp"
#include "usda/cli.hpp"
#include "usda/corpus.hpp"
#include "usda/crf.hpp"
#include "usda/error.hpp"
#include "usda/synthetic.hpp"

#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <sstream>

namespace py = pybind11;

namespace {

std::vector<usda::analysis::TraceRecord> parse_traces(const std::vector<std::string>& lines) {
  std::vector<usda::analysis::TraceRecord> out;
  for (const auto& l : lines) out.push_back(usda::analysis::trace_from_json(nlohmann::json::parse(l)));
  return out;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "USDA core bindings";
  m.attr("__version__") = USDA_VERSION;

  py::register_exception<usda::Error>(m, "UsdaError", PyExc_ValueError);

  m.def("map_rating", [](double r) { return static_cast<int>(usda::map_rating(r)); }, py::arg("avg_rating"),
        "Satisfaction class 0/1/2 for an averaged 1-5 rating.");

  m.def("crf_log_likelihood",
        [](const usda::ad::Matrix& a, const usda::ad::Matrix& g, const std::vector<int>& labels) {
          return usda::crf::log_likelihood(a, g, labels);
        },
        py::arg("emissions"), py::arg("transitions"), py::arg("labels"));
  m.def("crf_log_partition", &usda::crf::log_partition, py::arg("emissions"), py::arg("transitions"));
  m.def("viterbi_decode", &usda::crf::viterbi_decode, py::arg("emissions"), py::arg("transitions"));

  m.def("impact_score",
        [](const std::vector<std::string>& trace_lines, const std::vector<int>& q, int c, bool use_g) {
          return usda::analysis::impact_score(parse_traces(trace_lines), q, c,
                                              use_g ? usda::analysis::GateConvention::kG
                                                    : usda::analysis::GateConvention::kOneMinusG);
        },
        py::arg("trace_lines"), py::arg("q"), py::arg("c"), py::arg("use_g") = false,
        "Impact of DA sub-sequence q on class c over JSON trace lines; None when no dialogue contains q.");

  m.def("gen_synthetic",
        [](std::size_t n, std::uint64_t seed, const std::string& rule, double confusion) {
          usda::synthetic::SyntheticOptions o;
          o.dialogues = n;
          o.seed = seed;
          o.rule = usda::synthetic::rule_from_name(rule);
          o.confusion = confusion;
          std::vector<std::string> out;
          for (const auto& d : usda::synthetic::generate(o)) out.push_back(usda::dialogue_to_json(d).dump());
          return out;
        },
        py::arg("n"), py::arg("seed") = 0, py::arg("rule") = "repeat-da-dissatisfied",
        py::arg("confusion") = 0.25, "Synthetic dialogues as JSON strings.");

  m.def("satisfaction_rule",
        [](const std::vector<int>& seq) { return static_cast<int>(usda::synthetic::satisfaction_rule(seq)); },
        py::arg("da_sequence"));

  m.def("run",
        [](const std::vector<std::string>& args) {
          std::ostringstream out, err;
          int code;
          {
            py::gil_scoped_release release;
            code = usda::cli::run(args, out, err);
          }
          return py::make_tuple(code, out.str(), err.str());
        },
        py::arg("args"), "Runs one CLI command in-process; returns (exit_code, stdout, stderr).");
}
