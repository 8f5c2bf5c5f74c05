//! Binary model format.
//!
//! ```text
//! magic        15 bytes   "EVPINN-MODEL-v1"
//! blocks       u32        number of networks that follow
//! per network:
//!   n_sizes    u32
//!   sizes      n_sizes x u32
//!   acts       (n_sizes - 1) x u8    0 = identity, 1 = tanh
//!   seed       u64
//!   n_params   u64
//!   params     n_params x f64        flat order of `Network::params`
//! ```
//!
//! All integers and floats are little-endian.

use std::io::{Read, Write};

use super::{param_count, Activation, Network, NnError};

pub const MAGIC: &[u8; 15] = b"EVPINN-MODEL-v1";

fn fmt_err(msg: impl Into<String>) -> NnError {
    NnError::Format(msg.into())
}

pub fn write_networks<W: Write>(mut w: W, nets: &[&Network]) -> Result<(), NnError> {
    w.write_all(MAGIC)?;
    w.write_all(&(nets.len() as u32).to_le_bytes())?;
    for net in nets {
        w.write_all(&(net.sizes().len() as u32).to_le_bytes())?;
        for &s in net.sizes() {
            w.write_all(&(s as u32).to_le_bytes())?;
        }
        for a in net.activations() {
            w.write_all(&[match a {
                Activation::Identity => 0u8,
                Activation::Tanh => 1u8,
            }])?;
        }
        w.write_all(&net.seed().to_le_bytes())?;
        w.write_all(&(net.num_params() as u64).to_le_bytes())?;
        for p in net.params() {
            w.write_all(&p.to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

fn read_array<R: Read, const N: usize>(r: &mut R) -> Result<[u8; N], NnError> {
    let mut buf = [0u8; N];
    r.read_exact(&mut buf)
        .map_err(|e| fmt_err(format!("truncated file: {e}")))?;
    Ok(buf)
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32, NnError> {
    Ok(u32::from_le_bytes(read_array(r)?))
}

fn read_u64<R: Read>(r: &mut R) -> Result<u64, NnError> {
    Ok(u64::from_le_bytes(read_array(r)?))
}

pub fn read_networks<R: Read>(mut r: R) -> Result<Vec<Network>, NnError> {
    let magic: [u8; 15] = read_array(&mut r)?;
    if &magic != MAGIC {
        return Err(fmt_err("bad magic header"));
    }
    let blocks = read_u32(&mut r)?;
    let mut nets = Vec::with_capacity(blocks as usize);
    for _ in 0..blocks {
        let n_sizes = read_u32(&mut r)? as usize;
        if !(2..=64).contains(&n_sizes) {
            return Err(fmt_err(format!("implausible layer count {n_sizes}")));
        }
        let sizes = (0..n_sizes)
            .map(|_| read_u32(&mut r).map(|s| s as usize))
            .collect::<Result<Vec<_>, _>>()?;
        let activations = (0..n_sizes - 1)
            .map(|_| match read_array::<_, 1>(&mut r)?[0] {
                0 => Ok(Activation::Identity),
                1 => Ok(Activation::Tanh),
                c => Err(fmt_err(format!("unknown activation code {c}"))),
            })
            .collect::<Result<Vec<_>, _>>()?;
        let seed = read_u64(&mut r)?;
        let n_params = read_u64(&mut r)? as usize;
        if n_params != param_count(&sizes) {
            return Err(fmt_err(format!(
                "parameter count {n_params} does not match layer sizes {sizes:?}"
            )));
        }
        let params = (0..n_params)
            .map(|_| read_array::<_, 8>(&mut r).map(f64::from_le_bytes))
            .collect::<Result<Vec<_>, _>>()?;
        nets.push(Network::from_parts(sizes, activations, params, seed)?);
    }
    Ok(nets)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn header_layout() {
        let net = Network::new(&[1, 2, 1], Activation::Tanh, 7).unwrap();
        let mut buf = Vec::new();
        write_networks(&mut buf, &[&net]).unwrap();
        assert_eq!(&buf[..15], b"EVPINN-MODEL-v1");
        assert_eq!(&buf[15..19], &1u32.to_le_bytes());
        assert_eq!(&buf[19..23], &3u32.to_le_bytes());
        let expected_len = 15 + 4 + 4 + 3 * 4 + 2 + 8 + 8 + 8 * net.num_params();
        assert_eq!(buf.len(), expected_len);
    }

    #[test]
    fn rejects_corruption() {
        let net = Network::new(&[2, 3, 1], Activation::Tanh, 1).unwrap();
        let mut buf = Vec::new();
        write_networks(&mut buf, &[&net]).unwrap();
        let mut bad = buf.clone();
        bad[0] = b'X';
        assert!(read_networks(&bad[..]).is_err());
        assert!(read_networks(&buf[..buf.len() - 3]).is_err());
    }

    proptest! {
        #[test]
        fn round_trip_is_bit_exact(
            sizes in proptest::collection::vec(1usize..6, 2..5),
            seed in any::<u64>(),
            blocks in 1usize..4,
        ) {
            let nets: Vec<Network> = (0..blocks)
                .map(|b| Network::new(&sizes, Activation::Tanh, seed.wrapping_add(b as u64)).unwrap())
                .collect();
            let refs: Vec<&Network> = nets.iter().collect();
            let mut buf = Vec::new();
            write_networks(&mut buf, &refs).unwrap();
            let back = read_networks(&buf[..]).unwrap();
            prop_assert_eq!(back, nets);
        }
    }
}
