/* tslint:disable */
/* eslint-disable */
export const memory: WebAssembly.Memory;
export const constant_guess_curve: (a: number, b: number, c: number, d: bigint) => [number, number, number, number];
export const shrink: (a: number, b: number, c: number) => [number, number, number, number];
export const table1: (a: number, b: number) => [number, number, number, number];
export const __wbindgen_externrefs: WebAssembly.Table;
export const __externref_table_dealloc: (a: number) => void;
export const __wbindgen_free: (a: number, b: number, c: number) => void;
export const __wbindgen_malloc: (a: number, b: number) => number;
export const __wbindgen_start: () => void;
