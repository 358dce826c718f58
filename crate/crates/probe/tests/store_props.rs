use std::io::Write;

use apz_probe::store::{parse_header, Activations, HEADER_LEN};
use apz_probe::{read_activations, write_activations, ProbeError};
use proptest::prelude::*;

fn tensor() -> impl Strategy<Value = Activations> {
    (0usize..6, 1usize..4, 1usize..9).prop_flat_map(|(t, l, d)| {
        prop::collection::vec(any::<f32>(), t * l * d).prop_map(move |values| Activations::new(t, l, d, values).unwrap())
    })
}

fn same_bits(a: &Activations, b: &Activations) -> bool {
    (a.n_tokens, a.n_layers, a.hidden_dim) == (b.n_tokens, b.n_layers, b.hidden_dim)
        && a.values.iter().zip(&b.values).all(|(x, y)| x.to_bits() == y.to_bits())
}

proptest! {
    #[test]
    fn write_then_read_is_bit_exact(a in tensor()) {
        let mut buf = Vec::new();
        write_activations(&a, &mut buf).unwrap();
        prop_assert_eq!(buf.len(), HEADER_LEN + 4 * a.values.len());
        let h = parse_header(&buf).unwrap();
        prop_assert_eq!(h.n_tokens as usize, a.n_tokens);
        let b = read_activations(&buf[..]).unwrap();
        prop_assert!(same_bits(&a, &b));
        prop_assert_eq!(b.to_bytes().unwrap(), buf);
    }

    #[test]
    fn every_proper_prefix_is_rejected(a in tensor(), cut in any::<prop::sample::Index>()) {
        let buf = a.to_bytes().unwrap();
        let len = cut.index(buf.len());
        match Activations::from_bytes(&buf[..len]) {
            Err(ProbeError::Truncated { expected, actual }) => {
                prop_assert!(len >= HEADER_LEN);
                prop_assert_eq!(expected as usize, buf.len());
                prop_assert_eq!(actual as usize, len);
            }
            Err(ProbeError::Format { .. }) => prop_assert!(len < HEADER_LEN),
            other => prop_assert!(false, "prefix of {} bytes accepted: {:?}", len, other.map(|_| ())),
        }
    }
}

#[test]
fn files_round_trip_through_disk() {
    let dir = tempfile::tempdir().unwrap();
    let a = Activations::new(2, 3, 2, (0..12).map(|i| i as f32 - 0.25).collect()).unwrap();
    let path = dir.path().join("x.apzact");
    write_activations(&a, std::fs::File::create(&path).unwrap()).unwrap();
    assert_eq!(read_activations(std::fs::File::open(&path).unwrap()).unwrap(), a);
    std::fs::OpenOptions::new().append(true).open(&path).unwrap().write_all(&[7]).unwrap();
    assert!(matches!(
        read_activations(std::fs::File::open(&path).unwrap()),
        Err(ProbeError::Format { offset: 72, .. })
    ));
}
