#ifndef ROSMM_H
#define ROSMM_H

/* Watermark codec and robustness laboratory: VQ autoencoder training,
 * payload embedding into rendered carrier images, an attack suite, bit
 * extraction with optional restoration, and a CSV experiment runner.
 *
 * All functions return 0 on success and a nonzero status code otherwise;
 * rosmm_last_error() describes the most recent failure on this thread.
 * Handles are opaque and single-writer: do not share one handle across
 * threads without external synchronization.
 */

#ifdef __cplusplus
extern "C" {
#endif

#define ROSMM_OK 0
#define ROSMM_ERR_INVALID_ARGUMENT 1
#define ROSMM_ERR_IO 2
#define ROSMM_ERR_RUNTIME 3

typedef struct rosmm_codec rosmm_codec_t;
typedef struct rosmm_restorer rosmm_restorer_t;

const char* rosmm_version(void);

/* thread-local message for the last failing call; empty string if none */
const char* rosmm_last_error(void);

/* deterministic procedural RGB textures as <index>.ppm files */
int rosmm_gen_textures(const char* out_dir, int count, int image_size, unsigned long long seed);

/* train the VQ autoencoder on a directory of PPM images and write a
 * checkpoint; log_csv may be NULL to skip the per-batch loss log */
int rosmm_train_vqvae(const char* data_dir, const char* out_checkpoint, int image_size, int grid, int codebook_size,
                      int dim, int epochs, int batch, unsigned long long seed, double alpha, double beta,
                      const char* log_csv);

/* train the restoration network against a frozen codec checkpoint */
int rosmm_train_restorer(const char* codec_checkpoint, const char* data_dir, const char* out_checkpoint,
                         double ber_lo, double ber_hi, int epochs, unsigned long long seed);

int rosmm_codec_open(const char* checkpoint, rosmm_codec_t** out);
void rosmm_codec_close(rosmm_codec_t* codec);
int rosmm_codec_image_size(const rosmm_codec_t* codec, int* out);
int rosmm_codec_payload_bits(const rosmm_codec_t* codec, int* out);

int rosmm_restorer_open(const char* checkpoint, rosmm_restorer_t** out);
void rosmm_restorer_close(rosmm_restorer_t* restorer);

/* encode a secret PPM to its payload, whiten with the key, embed into a
 * rendered carrier image; writes the payload bits file and the container */
int rosmm_embed(rosmm_codec_t* codec, const char* secret_ppm, unsigned long long key, int r,
                unsigned long long perm_seed, const char* out_bits, const char* out_container_ppm);

/* apply one attack family to a PPM image */
int rosmm_attack(const char* in_ppm, const char* family, double theta, unsigned long long seed, const char* out_ppm);

/* invert a container image, extract and unwhiten the payload, decode the
 * secret; with a restorer and refine_rounds >= 1 the decoded image is
 * restored and the bits re-derived from it; restorer may be NULL and
 * out_bits may be NULL */
int rosmm_extract(rosmm_codec_t* codec, const rosmm_restorer_t* restorer, const char* container_ppm,
                  unsigned long long key, int r, unsigned long long perm_seed, int refine_rounds,
                  const char* out_image_ppm, const char* out_bits);

/* run the experiment grid described by a JSON config; out_csv overrides the
 * config's output path when non-NULL */
int rosmm_evaluate(const char* config_json, const char* out_csv);

int rosmm_psnr(const char* a_ppm, const char* b_ppm, double* out);
int rosmm_ssim(const char* a_ppm, const char* b_ppm, double* out);

#ifdef __cplusplus
}
#endif

#endif /* ROSMM_H */
