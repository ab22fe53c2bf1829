#include "taper/rep/patient_rep.hpp"

#include <algorithm>
#include <istream>
#include <ostream>
#include <stdexcept>

namespace taper::rep {

std::string_view to_string(Segment s) {
  switch (s) {
    case Segment::code: return "code";
    case Segment::text: return "text";
    case Segment::demo: return "demo";
  }
  return "?";
}

Segment parse_segment(std::string_view text) {
  if (text == "code") return Segment::code;
  if (text == "text") return Segment::text;
  if (text == "demo") return Segment::demo;
  throw std::invalid_argument("unknown segment '" + std::string(text) + "' (expected code, text or demo)");
}

std::set<Segment> parse_segments(std::string_view list) {
  std::set<Segment> out;
  while (!list.empty()) {
    const auto comma = list.find(',');
    const auto item = list.substr(0, comma);
    if (!item.empty()) out.insert(parse_segment(item));
    if (comma == std::string_view::npos) break;
    list.remove_prefix(comma + 1);
  }
  return out;
}

std::size_t SegmentLayout::offset(Segment s) const {
  switch (s) {
    case Segment::code: return 0;
    case Segment::text: return code;
    case Segment::demo: return code + text;
  }
  return 0;
}

std::size_t SegmentLayout::width(Segment s) const {
  switch (s) {
    case Segment::code: return code;
    case Segment::text: return text;
    case Segment::demo: return demo;
  }
  return 0;
}

std::span<const double> PatientRepresentation::segment(Segment s) const {
  return std::span<const double>(z).subspan(layout.offset(s), layout.width(s));
}

void PatientRepresentation::zero(const std::set<Segment>& segments) {
  for (Segment s : segments) std::fill_n(z.begin() + static_cast<long>(layout.offset(s)), layout.width(s), 0.0);
}

PatientRepresentation assemble(const Tensor& e_code, const Tensor& e_text, const Tensor& d, const SegmentLayout& layout) {
  const auto check = [](const Tensor& t, std::size_t want, Segment s) {
    if (t.rows() != 1 || t.cols() != want) {
      throw std::invalid_argument("assemble: " + std::string(to_string(s)) + " segment has shape " +
                                  shape_string(t.shape()) + ", expected [1x" + std::to_string(want) + "]");
    }
  };
  check(e_code, layout.code, Segment::code);
  check(e_text, layout.text, Segment::text);
  check(d, layout.demo, Segment::demo);
  PatientRepresentation r;
  r.layout = layout;
  r.z.reserve(layout.total());
  for (const Tensor* t : {&e_code, &e_text, &d}) r.z.insert(r.z.end(), t->data().begin(), t->data().end());
  return r;
}

SegmentLayout UpstreamModels::layout() const {
  if (!code || !text || !vocab || !demographics) throw std::invalid_argument("patient representation needs code, text, vocabulary and demographics models");
  return {code->config().d_code, text->config.d_enc, demographics->dimension()};
}

namespace {

Tensor text_segment(const UpstreamModels& m, const cohort::PatientRecord& record, std::size_t t, cohort::Task task) {
  const std::size_t width = m.text->config.d_enc;
  if (m.sentence_vectors) {
    if (const auto it = m.sentence_vectors->find(text::visit_key(record.patient_id, t)); it != m.sentence_vectors->end()) {
      if (it->second.cols() != m.text->config.d_text) {
        throw std::invalid_argument("sentence vectors for " + it->first + " have width " + std::to_string(it->second.cols()) +
                                    ", summarizer expects d_text " + std::to_string(m.text->config.d_text));
      }
      return m.text->summarizer.summarize(it->second);
    }
  }
  const auto e = m.text->embed(cohort::select_task_text(record.visits[t - 1], task));
  return e ? *e : Tensor::zeros(1, width);
}

Tensor row_of(const Tensor& m, std::size_t r) {
  Tensor out = Tensor::zeros(1, m.cols());
  std::copy(m.row(r).begin(), m.row(r).end(), out.data().begin());
  return out;
}

std::size_t code_history(std::size_t t, cohort::Task task) { return task == cohort::Task::code_prediction ? t : t - 1; }

}  // namespace

PatientRepresentation represent_visit(const UpstreamModels& models, const cohort::PatientRecord& record, std::size_t t,
                                      cohort::Task task) {
  const SegmentLayout layout = models.layout();
  if (t == 0 || t > record.visits.size()) {
    throw std::invalid_argument("visit index " + std::to_string(t) + " outside 1.." + std::to_string(record.visits.size()) +
                                " for " + record.patient_id);
  }
  const std::size_t h = code_history(t, task);
  Tensor e_code = Tensor::zeros(1, layout.code);
  if (h > 0) {
    const Tensor reps = models.code->represent(code::encode_history(record, *models.vocab, h));
    e_code = row_of(reps, h - 1);
  }
  auto r = assemble(e_code, text_segment(models, record, t, task), models.demographics->encode(record, t - 1), layout);
  r.patient_id = record.patient_id;
  r.visit_index = t;
  return r;
}

std::vector<PatientRepresentation> represent_patient(const UpstreamModels& models, const cohort::PatientRecord& record,
                                                     cohort::Task task) {
  const SegmentLayout layout = models.layout();
  const std::size_t T = record.visits.size();
  std::vector<PatientRepresentation> out;
  if (T == 0) return out;
  // Causal attention makes row h-1 of the full-history pass equal to the last
  // row of a pass over the first h visits.
  const Tensor reps = models.code->represent(code::encode_history(record, *models.vocab, T));
  for (std::size_t t = 1; t <= T; ++t) {
    const std::size_t h = code_history(t, task);
    const Tensor e_code = h > 0 ? row_of(reps, h - 1) : Tensor::zeros(1, layout.code);
    auto r = assemble(e_code, text_segment(models, record, t, task), models.demographics->encode(record, t - 1), layout);
    r.patient_id = record.patient_id;
    r.visit_index = t;
    out.push_back(std::move(r));
  }
  return out;
}

std::vector<LabeledRepresentation> represent_labels(const UpstreamModels& models, const cohort::Cohort& cohort,
                                                    const std::vector<cohort::TaskLabel>& labels, cohort::Task task) {
  std::vector<LabeledRepresentation> out;
  out.reserve(labels.size());
  std::size_t cached_patient = static_cast<std::size_t>(-1);
  std::vector<PatientRepresentation> cached;
  for (const auto& label : labels) {
    if (label.patient != cached_patient) {
      cached = represent_patient(models, cohort.patients.at(label.patient), task);
      cached_patient = label.patient;
    }
    out.push_back({cached.at(label.visit), label});
  }
  return out;
}

void write_representations(std::ostream& out, const std::vector<PatientRepresentation>& reps, cohort::Task task) {
  for (const auto& r : reps) {
    std::vector<float> z(r.z.begin(), r.z.end());
    const nlohmann::json j{{"patient_id", r.patient_id}, {"visit_index", r.visit_index}, {"task", cohort::to_string(task)}, {"z", z}};
    out << j.dump() << '\n';
  }
}

std::vector<RepresentationRow> read_representations(std::istream& in) {
  std::vector<RepresentationRow> rows;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      rows.push_back({j.at("patient_id").get<std::string>(), j.at("visit_index").get<std::size_t>(),
                      j.at("task").get<std::string>(), j.at("z").get<std::vector<double>>()});
    } catch (const nlohmann::json::exception& e) {
      throw std::invalid_argument("representations: line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  return rows;
}

}  // namespace taper::rep
