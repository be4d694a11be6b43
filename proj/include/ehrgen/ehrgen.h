#ifndef EHRGEN_EHRGEN_H
#define EHRGEN_EHRGEN_H

#include <stddef.h>
#include <stdint.h>

#if defined(EHRGEN_BUILDING)
#define EHRGEN_API __attribute__((visibility("default")))
#else
#define EHRGEN_API
#endif

#ifdef __cplusplus
extern "C" {
#endif

/* Every call returns one of these. Details of the last failure on the calling thread are in
   ehrgen_last_error(). */
typedef enum {
  EHRGEN_OK = 0,
  EHRGEN_INVALID = 1, /* bad input: missing file, malformed config, violated precondition */
  EHRGEN_RUNTIME = 2  /* failure while running a well-formed request */
} ehrgen_status;

typedef struct ehrgen_tables ehrgen_tables;         /* persons / visits / events */
typedef struct ehrgen_checkpoint ehrgen_checkpoint; /* trained model + vocabulary */

EHRGEN_API const char* ehrgen_version(void);
EHRGEN_API const char* ehrgen_last_error(void);
/* Strings returned through char** out-parameters are owned by the caller. */
EHRGEN_API void ehrgen_string_free(char* s);

/* FNV-1a 64 of a file's bytes, for run manifests. */
EHRGEN_API ehrgen_status ehrgen_file_hash(const char* path, uint64_t* out);

/* ---- tables ---- */
EHRGEN_API ehrgen_status ehrgen_tables_load(const char* persons_csv, const char* visits_csv, const char* events_csv,
                                            ehrgen_tables** out);
EHRGEN_API ehrgen_status ehrgen_tables_save(const ehrgen_tables* t, const char* persons_csv, const char* visits_csv,
                                            const char* events_csv);
/* Synthetic hospital fixture with n persons. */
EHRGEN_API ehrgen_status ehrgen_tables_synth_hospital(size_t n_persons, uint64_t seed, ehrgen_tables** out);
EHRGEN_API ehrgen_status ehrgen_tables_person_count(const ehrgen_tables* t, size_t* out);
EHRGEN_API void ehrgen_tables_free(ehrgen_tables* t);
/* ancestor_id,descendant_id pairs of the fixture vocabulary. */
EHRGEN_API ehrgen_status ehrgen_write_fixture_ancestry(const char* path);

/* ---- codec ---- */
/* Encodes every person into a sequence file (TSV person_id, tokens). report_json may be NULL. */
EHRGEN_API ehrgen_status ehrgen_encode(const ehrgen_tables* t, int intra_visit_time, const char* out_sequences,
                                       char** report_json);
/* Strict decoding: the first malformed sequence fails the call naming its position and reason. */
EHRGEN_API ehrgen_status ehrgen_decode(const char* sequences, ehrgen_tables** out);
/* Lenient conversion of generated sequences; failures are counted per reason in report_csv. */
EHRGEN_API ehrgen_status ehrgen_convert(const char* sequences, ehrgen_tables** out, char** report_csv);
EHRGEN_API ehrgen_status ehrgen_build_vocab(const char* sequences, const char* out_vocab);

/* ---- training ---- */
/* Config paths may be NULL for defaults. With resume != 0, continues from out_dir/latest.bin. */
EHRGEN_API ehrgen_status ehrgen_train(const ehrgen_tables* t, const char* train_config, const char* model_config,
                                      const char* out_dir, uint64_t seed, int resume, char** summary_json);
EHRGEN_API ehrgen_status ehrgen_checkpoint_load(const char* path, ehrgen_checkpoint** out);
EHRGEN_API ehrgen_status ehrgen_checkpoint_info(const ehrgen_checkpoint* ck, char** info_json);
EHRGEN_API void ehrgen_checkpoint_free(ehrgen_checkpoint* ck);

/* ---- generation ---- */
/* Experts file lists sampling blocks; each names its checkpoint. Expert seeds are offset by seed. */
EHRGEN_API ehrgen_status ehrgen_generate(const char* experts_config, const char* out_sequences, uint64_t seed,
                                         unsigned threads, char** summary_json);
EHRGEN_API ehrgen_status ehrgen_summary_stats(const ehrgen_tables* t, const char* label, char** csv);

/* ---- evaluation ---- */
/* Cohort files hold person_id,index_date,label. ancestry_csv may be NULL. */
EHRGEN_API ehrgen_status ehrgen_zeroshot(const ehrgen_checkpoint* ck, const char* task_config, const ehrgen_tables* t,
                                         const char* cohort_csv, const char* ancestry_csv, uint64_t seed,
                                         size_t n_bootstrap, unsigned threads, char** predictions_csv,
                                         char** metrics_csv);
EHRGEN_API ehrgen_status ehrgen_probe(const ehrgen_checkpoint* ck, const ehrgen_tables* t, const char* train_cohort_csv,
                                      const char* test_cohort_csv, double l2, uint64_t seed, size_t n_bootstrap,
                                      unsigned threads, char** metrics_csv);
/* Writes person_id,index_date,label for the cohort definition's outcome labeling. */
EHRGEN_API ehrgen_status ehrgen_outcome_cohort(const ehrgen_tables* t, const char* cohort_config,
                                               const char* out_cohort_csv, size_t* members);
EHRGEN_API ehrgen_status ehrgen_prevalence(const ehrgen_tables* real, const ehrgen_tables* synthetic, char** csv);
EHRGEN_API ehrgen_status ehrgen_pathway(const ehrgen_tables* t, const char* cohort_config, char** members_csv,
                                        double* prevalence);
/* config may be NULL. passed receives 1 when every score is below the risk threshold. */
EHRGEN_API ehrgen_status ehrgen_privacy(const ehrgen_tables* train, const ehrgen_tables* eval,
                                        const ehrgen_tables* synthetic, const char* config, uint64_t seed,
                                        unsigned threads, char** csv, int* passed);

/* ---- studies and checks ---- */
/* steps = 0 uses the default schedule. */
EHRGEN_API ehrgen_status ehrgen_simstudy(uint64_t seed, uint64_t steps, unsigned threads, char** curves_csv,
                                         char** summary_json);
/* The exhaustive hand-built routing network check: number of inputs that disagree with the gate table. */
EHRGEN_API ehrgen_status ehrgen_handcrafted_mismatches(size_t* mismatches);
/* config may be NULL. */
EHRGEN_API ehrgen_status ehrgen_gradcheck(const char* config, uint64_t seed, double* max_rel_error);

#ifdef __cplusplus
}
#endif

#endif
