#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <sstream>

#include "lyricsync/cascade.hpp"
#include "lyricsync/cli.hpp"
#include "lyricsync/error.hpp"
#include "lyricsync/metrics.hpp"
#include "lyricsync/model.hpp"
#include "lyricsync/text.hpp"
#include "lyricsync/training.hpp"

namespace py = pybind11;
using namespace lyricsync;

namespace {

using FloatArray = py::array_t<float, py::array::c_style | py::array::forcecast>;

py::array_t<float> ToArray(const MelFeatures& m) {
  py::array_t<float> out({m.num_frames, m.num_bins()});
  std::copy(m.frames.begin(), m.frames.end(), out.mutable_data());
  return out;
}

MelFeatures FromArray(const FloatArray& a, int stack_factor) {
  if (a.ndim() != 2) throw py::value_error("features must be a 2-D array [frames x bins]");
  MelFeatures m;
  m.num_frames = static_cast<int>(a.shape(0));
  m.stack_factor = stack_factor;
  if (a.shape(1) != m.num_bins()) throw py::value_error("feature width does not match the stack factor");
  m.frames.assign(a.data(), a.data() + a.size());
  return m;
}

std::vector<WordTiming> Timings(const std::vector<double>& ref, const std::vector<double>& pred) {
  if (ref.size() != pred.size()) throw py::value_error("reference and prediction lengths differ");
  std::vector<WordTiming> w(ref.size());
  for (size_t i = 0; i < w.size(); ++i) {
    w[i].word_index = static_cast<int>(i);
    w[i].t_ref = ref[i];
    w[i].t_pred = pred[i];
  }
  return w;
}

py::dict SequenceDict(const TokenSequence& s) {
  py::dict d;
  d["tokens"] = s.tokens;
  d["word_starts"] = s.word_starts;
  d["sentence_starts"] = s.sentence_starts;
  d["source_words"] = s.source_words;
  d["language"] = s.language_tag;
  return d;
}

}  // namespace

PYBIND11_MODULE(_lyricsync, m) {
  m.doc() = "Hierarchical lyrics-to-audio alignment";

  static py::exception<Error> error(m, "LyricsyncError");
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const Error& e) {
      error(e.what());
    }
  });

  m.def(
      "lyrics_to_ipa",
      [](const std::string& text, const std::string& language) {
        static const G2pRegistry g2p = G2pRegistry::WithBuiltins();
        return SequenceDict(LyricsToIpa(text, language, g2p));
      },
      py::arg("text"), py::arg("language") = "en");
  m.def("vocabulary_size", [] { return Vocabulary::Default().size(); });

  m.def(
      "wav_to_mel", [](const FloatArray& samples, int rate) { return ToArray(WavToMel({samples.data(), size_t(samples.size())}, rate)); },
      py::arg("samples"), py::arg("sample_rate") = kSampleRate);
  m.def(
      "stack_frames", [](const FloatArray& f, int factor) { return ToArray(StackFrames(FromArray(f, 1), factor)); },
      py::arg("features"), py::arg("factor") = kSentenceStack);

  m.def("mae", [](const std::vector<double>& r, const std::vector<double>& p) { return Mae(Timings(r, p)); });
  m.def("medae", [](const std::vector<double>& r, const std::vector<double>& p) { return MedAe(Timings(r, p)); });
  m.def(
      "perc",
      [](const std::vector<double>& r, const std::vector<double>& p, double duration) {
        return Perc(Timings(r, p), duration);
      },
      py::arg("reference"), py::arg("prediction"), py::arg("duration"));
  m.def(
      "mauch",
      [](const std::vector<double>& r, const std::vector<double>& p, double tau) { return Mauch(Timings(r, p), tau); },
      py::arg("reference"), py::arg("prediction"), py::arg("tau") = 0.2);
  m.def("f1_from_confusion", [](double tp, double fp, double fn) {
    const auto r = F1FromConfusion(tp, fp, fn);
    return py::make_tuple(r.precision, r.recall, r.f1);
  });

  py::class_<AlignerModel>(m, "AlignerModel")
      .def_static("load", &AlignerModel::Load)
      .def_static(
          "toy",
          [](const std::string& level, int c_encoder, uint64_t seed) {
            return AlignerModel(ModelConfig::Toy(ParseLevel(level), c_encoder), seed);
          },
          py::arg("level"), py::arg("c_encoder") = 8, py::arg("seed") = 0)
      .def("save", &AlignerModel::Save)
      .def_property_readonly("version", &AlignerModel::Version)
      .def_property_readonly("level", [](const AlignerModel& a) { return std::string(LevelName(a.config().level)); })
      .def_property_readonly("num_parameters", &AlignerModel::num_parameters)
      .def(
          "align",
          [](const AlignerModel& model, const std::vector<int>& tokens, const FloatArray& features) {
            const auto a = model.Align(tokens, FromArray(features, model.config().stack_factor()));
            py::array_t<double> probs({a.rows, a.cols});
            std::copy(a.probs.begin(), a.probs.end(), probs.mutable_data());
            return probs;
          },
          py::arg("tokens"), py::arg("features"));

  m.def(
      "align_song",
      [](const std::string& song_id, const FloatArray& features, const std::string& lyrics, const std::string& language,
         const AlignerModel& sentence, const AlignerModel& word, bool monotonic) {
        static const G2pRegistry g2p = G2pRegistry::WithBuiltins();
        const MelFeatures f = FromArray(features, 1);
        CascadeOptions opt;
        opt.monotonic = monotonic;
        const auto r = AlignSongFeatures(song_id, f, f.num_frames * f.seconds_per_frame(),
                                         LyricsToIpa(lyrics, language, g2p), {{&sentence}, {&word}}, opt);
        return r.ToJson();
      },
      py::arg("song_id"), py::arg("features"), py::arg("lyrics"), py::arg("language") = "en", py::arg("sentence"),
      py::arg("word"), py::arg("monotonic") = false);

  m.def(
      "synth_corpus",
      [](int n, uint64_t seed) {
        py::list out;
        for (const auto& s : SynthCorpus(n, seed)) {
          py::dict d;
          d["id"] = s.id;
          d["lyrics"] = s.lyrics;
          d["features"] = ToArray(s.features);
          std::vector<double> onsets;
          for (const auto& w : s.labels.words) onsets.push_back(w.start_sec);
          d["word_onsets"] = onsets;
          out.append(d);
        }
        return out;
      },
      py::arg("n"), py::arg("seed") = 0);

  m.def("run_cli", [](std::vector<std::string> args) {
    args.insert(args.begin(), "lyricsync");
    std::vector<const char*> argv;
    for (const auto& a : args) argv.push_back(a.c_str());
    std::ostringstream out, err;
    int code;
    {
      py::gil_scoped_release release;
      code = RunCli(static_cast<int>(argv.size()), argv.data(), out, err);
    }
    return py::make_tuple(code, out.str(), err.str());
  });
}
