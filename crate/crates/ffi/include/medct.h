#ifndef MEDCT_H
#define MEDCT_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stddef.h>
#include <stdbool.h>

// Result code of every fallible call.
typedef enum MedctStatus {
  MEDCT_STATUS_OK = 0,
  // A required pointer argument was NULL.
  MEDCT_STATUS_NULL_ARGUMENT = 1,
  // A string argument was not valid UTF-8.
  MEDCT_STATUS_INVALID_UTF8 = 2,
  // A concept or other named item does not exist.
  MEDCT_STATUS_NOT_FOUND = 3,
  // Malformed input data or an out-of-range argument.
  MEDCT_STATUS_INVALID_INPUT = 4,
  // A file could not be read.
  MEDCT_STATUS_IO = 5,
  // The embedder failed.
  MEDCT_STATUS_EMBEDDING = 6,
  // The library panicked; the handle involved should be discarded.
  MEDCT_STATUS_PANIC = 7,
} MedctStatus;

// Immutable concept graph.
typedef struct MedctGraph MedctGraph;

// Entity linker: mention detector, concept index, builtin embedder and an
// optional static dictionary.
typedef struct MedctLinker MedctLinker;

// BM25 search index over concept-tagged documents.
typedef struct MedctSearchIndex MedctSearchIndex;

// Library version as a static string; do not free.
const char *medct_version(void);

// Message for the last failed call on this thread, or NULL after a
// successful one. Valid until the next call on the same thread; do not free.
const char *medct_last_error(void);

// # Safety
// `s` must be NULL or a string returned by this library, not yet freed.
void medct_string_free(char *s);

// Loads a graph snapshot written by `medct ingest`.
//
// # Safety
// `path` must be a NUL-terminated string; `out` must be writable.
enum MedctStatus medct_graph_load(const char *path, struct MedctGraph **out);

// Parses the three release TSV files.
//
// # Safety
// All paths must be NUL-terminated strings; `out` must be writable.
enum MedctStatus medct_graph_load_release(const char *concepts,
                                          const char *descriptions,
                                          const char *relationships,
                                          struct MedctGraph **out);

// # Safety
// `graph` must be NULL or a handle from `medct_graph_load*`, not yet freed.
void medct_graph_free(struct MedctGraph *graph);

// Number of concepts and synonyms, in total or, when `hierarchy` is one of
// "body", "procedure", "finding", in that hierarchy only. Either output
// pointer may be NULL.
//
// # Safety
// `graph` must be a live handle; `hierarchy` NULL or a NUL-terminated string.
enum MedctStatus medct_graph_counts(const struct MedctGraph *graph,
                                    const char *hierarchy,
                                    size_t *concepts,
                                    size_t *synonyms);

// Concept record as JSON: id, hierarchy, fsn, synonyms.
//
// # Safety
// `graph` must be a live handle, `id` a NUL-terminated string, `out` writable.
enum MedctStatus medct_graph_concept_json(const struct MedctGraph *graph,
                                          const char *id,
                                          char **out);

// Textual description of a concept (name, synonyms, hierarchy, relations),
// as used for contextual translation.
//
// # Safety
// As for [`medct_graph_concept_json`].
enum MedctStatus medct_graph_describe(const struct MedctGraph *graph, const char *id, char **out);

// Builds a linker with the builtin embedder of dimension `dim` (0 for the
// default). `languages` ("en,zh", NULL for all) selects synonyms;
// `dictionary` is an optional static dictionary file.
//
// # Safety
// `graph` must be a live handle; string arguments NULL or NUL-terminated;
// `out` writable. The linker does not borrow the graph.
enum MedctStatus medct_linker_new(const struct MedctGraph *graph,
                                  size_t dim,
                                  const char *languages,
                                  const char *dictionary,
                                  struct MedctLinker **out);

// # Safety
// `linker` must be NULL or a handle from [`medct_linker_new`], not yet freed.
void medct_linker_free(struct MedctLinker *linker);

// Detects and links the mentions in `text`. Writes a JSON array of
// entities `{note_id, start, end, hierarchy, candidates, source}` with
// character offsets.
//
// # Safety
// `linker` must be a live handle; `text` NUL-terminated; `out` writable.
enum MedctStatus medct_link_json(const struct MedctLinker *linker,
                                 const char *text,
                                 size_t top_k,
                                 char **out);

// Loads an index written by `medct index`.
//
// # Safety
// `path` must be NUL-terminated; `out` writable.
enum MedctStatus medct_search_index_load(const char *path, struct MedctSearchIndex **out);

// # Safety
// `index` must be NULL or a handle from [`medct_search_index_load`].
void medct_search_index_free(struct MedctSearchIndex *index);

// Runs a query. `mode` is "sparse", "hybrid_boost" or "concept_filter".
// With a linker the query is annotated first; with NULL it is plain text.
// Writes `{"query_concepts": [...], "results": [{note_id, score,
// matched_concepts}]}`.
//
// # Safety
// `index` must be a live handle, `linker` NULL or a live handle, strings
// NUL-terminated, `out` writable.
enum MedctStatus medct_search_json(const struct MedctSearchIndex *index,
                                   const struct MedctLinker *linker,
                                   const char *query,
                                   const char *mode,
                                   size_t top_n,
                                   double w_c,
                                   char **out);

// Contextual translation prompt for one synonym of a concept.
//
// # Safety
// `graph` must be a live handle; strings NUL-terminated; `out` writable.
enum MedctStatus medct_prompt_translation(const struct MedctGraph *graph,
                                          const char *concept_id,
                                          const char *synonym,
                                          const char *language,
                                          char **out);

// Few-shot NER prompt for one note.
//
// # Safety
// `note` must be NUL-terminated; `out` writable.
enum MedctStatus medct_prompt_ner(const char *note, char **out);

// Summary prompt. With `entities` (newline-separated mentions) the guided
// variant is built, otherwise the zero-shot one.
//
// # Safety
// `input` must be NUL-terminated, `entities` NULL or NUL-terminated, `out`
// writable.
enum MedctStatus medct_prompt_summary(const char *input, const char *entities, char **out);

#endif  /* MEDCT_H */
