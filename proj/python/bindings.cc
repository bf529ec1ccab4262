// Copyright 2026 The dentlabel Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <sstream>

#include "dentlabel/crop.h"
#include "dentlabel/error.h"
#include "dentlabel/labeling.h"
#include "dentlabel/metrics.h"
#include "dentlabel/phrase.h"
#include "dentlabel/pipeline.h"
#include "dentlabel/report.h"
#include "dentlabel/study.h"

namespace py = pybind11;
using nlohmann::json;

namespace dentlabel {
namespace {

py::object to_py(const json& j) {
  switch (j.type()) {
    case json::value_t::null: return py::none();
    case json::value_t::boolean: return py::bool_(j.get<bool>());
    case json::value_t::number_integer: return py::int_(j.get<std::int64_t>());
    case json::value_t::number_unsigned: return py::int_(j.get<std::uint64_t>());
    case json::value_t::number_float: return py::float_(j.get<double>());
    case json::value_t::string: return py::str(j.get<std::string>());
    case json::value_t::array: {
      py::list out;
      for (const auto& e : j) out.append(to_py(e));
      return out;
    }
    case json::value_t::object: {
      py::dict out;
      for (const auto& [k, v] : j.items()) out[py::str(k)] = to_py(v);
      return out;
    }
    default: return py::none();
  }
}

ConfusionCounts counts(double tp, double fp, double fn, double tn) { return {tp, fp, fn, tn}; }

py::object parse_report_py(const std::string& text, const std::string& report_id,
                           const std::optional<std::vector<std::string>>& patterns) {
  ParseOptions options;
  if (patterns) options.filter = PresenceFilter(*patterns);
  return to_py(to_json(parse_report(text, report_id, options)));
}

// Rule-based extraction and linkage of a single report against the reference
// vocabulary: list of (fdi, condition name) pairs.
std::vector<std::pair<int, std::string>> link_report_py(const std::string& text, const std::string& report_id) {
  const auto vocabulary = ConditionVocabulary::reference();
  PhraseExtractor extractor(ExtractionStrategy::kRules, {}, default_rule_set(), nullptr);
  const auto extracted = extract_corpus({parse_report(text, report_id)}, extractor, 1);
  const auto matrix = build_label_matrix(extracted, vocabulary);
  std::vector<std::pair<int, std::string>> out;
  for (const auto& r : matrix.records()) {
    for (int c = 1; c <= vocabulary.size(); ++c) {
      if (r.labels[c - 1]) out.emplace_back(r.tooth.code(), vocabulary.at(c).name);
    }
  }
  return out;
}

py::dict split_py(const std::vector<std::pair<std::string, int>>& crops, std::vector<double> ratios,
                  std::uint64_t seed) {
  if (ratios.size() != 3) fail(ErrorCode::kBadRatios, "ratios must have three entries");
  std::vector<CropRef> refs;
  for (const auto& [image, fdi] : crops) refs.push_back({image, FdiTooth(fdi)});
  const auto manifest = split_dataset(refs, {ratios[0], ratios[1], ratios[2]}, seed);
  py::dict out;
  for (const auto& e : manifest.entries) {
    out[py::make_tuple(e.crop.image_id, e.crop.tooth.code())] = std::string(split_name(e.split));
  }
  return out;
}

}  // namespace
}  // namespace dentlabel

PYBIND11_MODULE(_dentlabel, m) {
  using namespace dentlabel;
  m.doc() = "Tooth-level label pipeline and agreement statistics";

  static py::exception<Error> error_type(m, "DentlabelError", PyExc_ValueError);
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const Error& e) {
      py::object err = py::handle(error_type.ptr())(py::str(e.what()));
      err.attr("code") = std::string(error_code_name(e.code()));
      PyErr_SetObject(error_type.ptr(), err.ptr());
    }
  });

  m.def("version_info", [] { return to_py(version_info()); });

  m.def("tokenize_teeth", [](const std::string& s) {
    std::vector<int> out;
    for (const auto& t : tokenize_teeth(s)) out.push_back(t.code());
    return out;
  });
  m.def("is_presence_sentence", [](const std::string& s, const std::optional<std::vector<std::string>>& patterns) {
    return patterns ? PresenceFilter(*patterns).matches(s) : PresenceFilter().matches(s);
  }, py::arg("sentence"), py::arg("patterns") = py::none());
  m.def("parse_report", &parse_report_py, py::arg("text"), py::arg("report_id") = "report",
        py::arg("patterns") = py::none());
  m.def("normalize_phrase", &normalize_phrase);
  m.def("extract_noun_phrases", [](const std::string& sentence) {
    ReportLine line{1, sentence, tokenize_teeth(sentence), false};
    std::vector<std::string> out;
    for (const auto& p : extract_noun_phrases_rules(line)) out.push_back(p.normalized);
    return out;
  });
  m.def("link_report", &link_report_py, py::arg("text"), py::arg("report_id") = "report");
  m.def("reference_conditions", [] {
    std::vector<std::pair<int, std::string>> out;
    for (const auto& c : ConditionVocabulary::reference().conditions()) out.emplace_back(c.index, c.name);
    return out;
  });

  m.def("crop_window", [](double cx, double cy, int side, int width, int height) {
    const auto spec = crop_window({cx, cy}, side, {width, height});
    return std::make_pair(spec.x0, spec.y0);
  }, py::arg("cx"), py::arg("cy"), py::arg("side"), py::arg("width"), py::arg("height"));
  m.def("split_dataset", &split_py, py::arg("crops"), py::arg("ratios") = std::vector<double>{0.7, 0.15, 0.15},
        py::arg("seed") = 0);

  m.def("mcc", [](double tp, double fp, double fn, double tn) { return mcc(counts(tp, fp, fn, tn)); },
        py::arg("tp"), py::arg("fp"), py::arg("fn"), py::arg("tn"));
  m.def("soft_mcc", [](const std::vector<double>& y, const std::vector<double>& p, double epsilon) {
    return mcc_smoothed(soft_confusion(y, p), epsilon);
  }, py::arg("y"), py::arg("p"), py::arg("epsilon") = 1e-8);
  m.def("bce", [](const std::vector<double>& y, const std::vector<double>& p, double clamp) {
    return bce(y, p, clamp);
  }, py::arg("y"), py::arg("p"), py::arg("clamp") = 1e-7);
  m.def("combined_loss", [](const std::vector<double>& y, const std::vector<double>& p, double alpha,
                            double epsilon, double clamp) {
    return combined_loss(y, p, LossConfig{alpha, epsilon, clamp});
  }, py::arg("y"), py::arg("p"), py::arg("alpha") = 0.5, py::arg("epsilon") = 1e-8, py::arg("clamp") = 1e-7);
  m.def("fleiss_kappa", [](const std::vector<std::vector<int>>& table) {
    return fleiss_kappa(AgreementTable(table));
  });
  m.def("ols_fit", [](const std::vector<std::vector<double>>& rows, const std::vector<double>& y, bool intercept) {
    return to_py(ols_fit(rows, y, intercept).to_json());
  }, py::arg("rows"), py::arg("y"), py::arg("intercept") = true);
  m.def("majority_vote", [](const std::vector<std::vector<std::uint8_t>>& votes, const std::string& tie) {
    return majority_vote(votes, parse_tie_policy(tie));
  }, py::arg("votes"), py::arg("tie") = "negative");

  m.def("run_cli", [](const std::vector<std::string>& args) {
    std::ostringstream out;
    std::ostringstream err;
    int code;
    {
      py::gil_scoped_release release;
      code = run_cli(args, out, err);
    }
    return py::make_tuple(code, out.str(), err.str());
  });
}
