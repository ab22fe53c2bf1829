#pragma once

#include <iosfwd>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "taper/code/code_embedder.hpp"
#include "taper/cohort/labels.hpp"
#include "taper/cohort/vocabulary.hpp"
#include "taper/text/text_embedder.hpp"

namespace taper::rep {

enum class Segment { code, text, demo };
std::string_view to_string(Segment s);
Segment parse_segment(std::string_view text);
/// Comma-separated segment names, e.g. "code,text".
std::set<Segment> parse_segments(std::string_view list);

struct SegmentLayout {
  std::size_t code = 0;
  std::size_t text = 0;
  std::size_t demo = 0;

  std::size_t total() const { return code + text + demo; }
  std::size_t offset(Segment s) const;
  std::size_t width(Segment s) const;
  bool operator==(const SegmentLayout&) const = default;
};

/// Z^t = [E_c; E_U; d_t] for one visit.
struct PatientRepresentation {
  std::string patient_id;
  std::size_t visit_index = 0;  ///< 1-based
  SegmentLayout layout;
  std::vector<double> z;

  std::span<const double> segment(Segment s) const;
  /// Zeroes the listed segments in place.
  void zero(const std::set<Segment>& segments);
};

/// Concatenates the three segments (each 1 x width). A width that differs
/// from `layout` is rejected, naming the segment.
PatientRepresentation assemble(const Tensor& e_code, const Tensor& e_text, const Tensor& d, const SegmentLayout& layout);

/// Frozen upstream models. Extraction only reads them.
struct UpstreamModels {
  const code::CodeEmbedderModel* code = nullptr;
  const text::TextModel* text = nullptr;
  const cohort::CodeVocabulary* vocab = nullptr;
  const cohort::DemographicsEncoder* demographics = nullptr;
  /// Optional imported sentence vectors, used instead of the sentence
  /// encoder for visits they cover.
  const text::SentenceVectors* sentence_vectors = nullptr;

  SegmentLayout layout() const;
};

/// Representation of visit t (1-based) for a task. The code segment
/// summarizes visits 1..t-1 (1..t for code prediction) and is zero without
/// history; the text segment summarizes the task's notes of visit t and is
/// zero when there are none; demographics are visit t's snapshot.
PatientRepresentation represent_visit(const UpstreamModels& models, const cohort::PatientRecord& record,
                                      std::size_t t, cohort::Task task);

/// Every visit of a patient in one pass; equal to calling represent_visit
/// for t = 1..T.
std::vector<PatientRepresentation> represent_patient(const UpstreamModels& models, const cohort::PatientRecord& record,
                                                     cohort::Task task);

struct LabeledRepresentation {
  PatientRepresentation rep;
  cohort::TaskLabel label;
};

/// Representations for the labeled visits of `cohort`.
std::vector<LabeledRepresentation> represent_labels(const UpstreamModels& models, const cohort::Cohort& cohort,
                                                    const std::vector<cohort::TaskLabel>& labels, cohort::Task task);

/// JSONL rows {"patient_id", "visit_index", "task", "z"}; z written as f32.
void write_representations(std::ostream& out, const std::vector<PatientRepresentation>& reps, cohort::Task task);
struct RepresentationRow {
  std::string patient_id;
  std::size_t visit_index = 0;
  std::string task;
  std::vector<double> z;
};
std::vector<RepresentationRow> read_representations(std::istream& in);

}  // namespace taper::rep
