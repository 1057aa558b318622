//! Entropy coding, the Deflate camera block, and the packed scene bitstream.

mod bitstream;
mod cdf;
mod deflate;
mod naive;
mod range;

pub use bitstream::{
    decode_cameras, encode_cameras, pack, unpack, unpack_with_layout, PackedLayout, SceneBitstream, HEADER_LEN, MAGIC,
    VERSION,
};
pub use cdf::{CdfTable, PROB_BITS, PROB_TOTAL};
pub use deflate::{deflate, inflate};
pub use naive::{naive_tensor_compress, naive_tensor_decompress, HalfTensor};
pub use range::{rc_decode, rc_encode, RangeDecoder, RangeEncoder};
