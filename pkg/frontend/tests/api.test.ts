import { describe, expect, it } from 'vitest';

import { GatewayClient, GatewayDown, GatewayFault } from '../src/api.js';

interface Call {
  url: string;
  method: string;
  body: string | null;
}

function clientWith(replies: Response[]): { client: GatewayClient; calls: Call[] } {
  const calls: Call[] = [];
  const client = new GatewayClient('http://gw:7180/', (url, init) => {
    calls.push({
      url,
      method: init?.method ?? 'GET',
      body: typeof init?.body === 'string' ? init.body : null,
    });
    const next = replies.shift();
    if (next === undefined) {
      return Promise.reject(new TypeError('fetch failed'));
    }
    return Promise.resolve(next);
  });
  return { client, calls };
}

function jsonReply(status: number, payload: unknown): Response {
  return new Response(JSON.stringify(payload), {
    status,
    headers: { 'Content-Type': 'application/json' },
  });
}

describe('GatewayClient', () => {
  it('lists students with a bare GET and a normalised base url', async () => {
    const { client, calls } = clientWith([jsonReply(200, [{ id: 'S001', label: 'Aisha Khan' }])]);
    const students = await client.listStudents();
    expect(students).toEqual([{ id: 'S001', label: 'Aisha Khan' }]);
    expect(calls).toEqual([{ url: 'http://gw:7180/api/students', method: 'GET', body: null }]);
  });

  it('registers with a bodyless POST to the target path', async () => {
    const { client, calls } = clientWith([jsonReply(200, { student_id: 'S001', issued_books: [] })]);
    await client.register('library', 'S001');
    expect(calls).toEqual([
      { url: 'http://gw:7180/api/register/library/S001', method: 'POST', body: null },
    ]);
  });

  it('sends the certificate body as JSON', async () => {
    const { client, calls } = clientWith([
      jsonReply(200, { certificate_id: 'C-S001-P01', student_id: 'S001' }),
    ]);
    const certificate = await client.issueCertificate('S001', 'P01');
    expect(certificate.certificate_id).toBe('C-S001-P01');
    expect(calls[0].method).toBe('POST');
    expect(calls[0].url).toBe('http://gw:7180/api/certificates');
    expect(JSON.parse(calls[0].body!)).toEqual({ student_id: 'S001', programme_id: 'P01' });
  });

  it('turns a JSON error reply into a GatewayFault keeping code and detail', async () => {
    const detail = {
      student_id: 'S002',
      departments: { Library: { status: 'Defaulter', reason: 'outstanding books: B001' } },
      overall: 'Blocked',
    };
    const { client } = clientWith([
      jsonReply(409, { code: 'VerificationBlocked', message: 'no-dues check failed', detail }),
    ]);
    const thrown = await client.issueCertificate('S002', 'P01').catch((error) => error);
    expect(thrown).toBeInstanceOf(GatewayFault);
    expect(thrown.status).toBe(409);
    expect(thrown.code).toBe('VerificationBlocked');
    expect(thrown.message).toBe('no-dues check failed');
    expect(thrown.detail).toEqual(detail);
  });

  it('keeps a synthetic code when the error reply is not JSON', async () => {
    const { client } = clientWith([
      new Response('<html>nope</html>', { status: 502, statusText: 'Bad Gateway' }),
    ]);
    const thrown = await client.verify('S001').catch((error) => error);
    expect(thrown).toBeInstanceOf(GatewayFault);
    expect(thrown.code).toBe('HTTP 502');
  });

  it('maps a network failure to GatewayDown without retrying', async () => {
    const { client, calls } = clientWith([]);
    const thrown = await client.listStudents().catch((error) => error);
    expect(thrown).toBeInstanceOf(GatewayDown);
    expect(thrown.message).toContain('gateway unreachable');
    expect(calls).toHaveLength(1);
  });

  it('escapes student ids in paths', async () => {
    const { client, calls } = clientWith([jsonReply(200, {})]);
    await client.verify('S 1/x');
    expect(calls[0].url).toBe('http://gw:7180/api/verify/S%201%2Fx');
  });
});
